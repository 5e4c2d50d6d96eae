#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "warpadam/config.hpp"

namespace warpadam {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitDiverged = 3 };

struct CommandContext {
  std::string command;  // meta-train | compare | run | check | import
  Config config;
  std::filesystem::path out_dir;  // may be empty for check
  std::string corrupt_rule;       // check only; test hook
};

// Runs one subcommand. Configuration problems raise UsageError (or another
// warpadam::Error); the return value is the process exit code otherwise.
int run_command(CommandContext& ctx, std::ostream& out, std::ostream& err);

// Parses argv, runs the subcommand and maps every failure onto the exit-code
// contract: 0 ok, 1 check failure, 2 usage, 3 divergence.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace warpadam
