#include "warpadam/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "warpadam/bench.hpp"
#include "warpadam/checkpoint.hpp"
#include "warpadam/error.hpp"
#include "warpadam/gradcheck.hpp"

#ifndef WARPADAM_VERSION
#define WARPADAM_VERSION "unknown"
#endif

namespace warpadam {

namespace {

// Reads `key`, preferring `<override>key` when that is set.
class View {
 public:
  View(const Config& cfg, std::string override_prefix = {}) : cfg_(cfg), over_(std::move(override_prefix)) {}

  std::string key(const std::string& k) const {
    if (!over_.empty() && cfg_.has(over_ + k)) {
      cfg_.touch(k);
      return over_ + k;
    }
    return k;
  }
  double d(const std::string& k, double f) const { return cfg_.get_double(key(k), f); }
  std::size_t z(const std::string& k, std::size_t f) const { return cfg_.get_size(key(k), f); }
  bool b(const std::string& k, bool f) const { return cfg_.get_bool(key(k), f); }
  std::string s(const std::string& k, const std::string& f) const { return cfg_.get_string(key(k), f); }

 private:
  const Config& cfg_;
  std::string over_;
};

HyperParams read_hyper(const View& v, const std::string& prefix, const HyperParams& base = {}) {
  HyperParams h;
  h.eta = v.d(prefix + "eta", base.eta);
  h.beta1 = v.d(prefix + "beta1", base.beta1);
  h.beta2 = v.d(prefix + "beta2", base.beta2);
  h.epsilon = v.d(prefix + "epsilon", base.epsilon);
  h.weight_decay = v.d(prefix + "weight_decay", base.weight_decay);
  h.momentum = v.d(prefix + "momentum", base.momentum);
  return h;
}

std::optional<WarpForm> parse_form(const std::string& s) {
  if (s == "default") return std::nullopt;
  if (s == "identity") return WarpForm::Identity;
  if (s == "diagonal") return WarpForm::Diagonal;
  if (s == "dense") return WarpForm::Dense;
  if (s == "kronecker") return WarpForm::Kronecker;
  throw UsageError("warp.form must be default, identity, diagonal, dense or kronecker, got '" + s + "'");
}

WarpPlacement parse_placement(const std::string& s) {
  if (s == "gradient") return WarpPlacement::Gradient;
  if (s == "update") return WarpPlacement::Update;
  throw UsageError("warp.placement must be gradient or update, got '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw UsageError("model.activation must be tanh or relu, got '" + s + "'");
}

OptimizerKind parse_kind(const std::string& s) {
  try {
    return parse_optimizer_kind(s);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

std::uint64_t read_seed(const Config& cfg) {
  if (!cfg.has("seed")) {
    if (const char* env = std::getenv("WARP_SEED"); env && *env) {
      Config tmp;
      tmp.set("WARP_SEED", env);
      const std::uint64_t seed = tmp.get_u64("WARP_SEED", 0);
      cfg.touch("seed");
      cfg.record_effective("seed", std::to_string(seed));
      return seed;
    }
  }
  return cfg.get_u64("seed", 0);
}

MetaConfig read_meta(const View& v) {
  MetaConfig m;
  m.inner_steps = v.z("meta.inner_steps", m.inner_steps);
  m.inner_hyper = read_hyper(v, "inner.", HyperParams{0.01});
  m.outer_eta = v.d("meta.outer_eta", m.outer_eta);
  m.tod_lambda = v.d("meta.tod_lambda", m.tod_lambda);
  m.first_order = v.b("meta.first_order", m.first_order);
  m.tasks_per_outer_step = v.z("meta.tasks_per_outer_step", m.tasks_per_outer_step);
  m.max_graph_nodes = v.z("meta.max_graph_nodes", m.max_graph_nodes);
  m.parallel_tasks = v.b("meta.parallel_tasks", m.parallel_tasks);
  return m;
}

RunConfig read_run(const View& v, std::uint64_t seed, OptimizerKind kind, const std::string& label) {
  RunConfig c;
  c.label = label;
  c.optimizer = kind;
  c.seed = seed;
  c.hyper = read_hyper(v, "optim.");
  c.geometry.n_way = v.z("task.n_way", c.geometry.n_way);
  c.geometry.k_shot = v.z("task.k_shot", c.geometry.k_shot);
  c.geometry.query_per_class = v.z("task.query_per_class", c.geometry.query_per_class);
  c.n_tasks = v.z("run.n_tasks", c.n_tasks);
  c.steps_per_task = v.z("run.steps_per_task", c.steps_per_task);
  c.eval_every = v.z("run.eval_every", c.eval_every);
  c.hidden = v.z("model.hidden", c.hidden);
  c.activation = parse_activation(v.s("model.activation", "tanh"));
  c.warp_form = parse_form(v.s("warp.form", "default"));
  c.placement = parse_placement(v.s("warp.placement", "gradient"));
  c.meta = read_meta(v);
  c.meta_outer_steps = v.z("meta.outer_steps", 0);
  c.meta_enabled = kind == OptimizerKind::WarpAdam && v.b("meta.enabled", false);
  return c;
}

TaskSourceSpec read_source(const Config& cfg, const std::string& prefix, const std::string& name,
                           bool require_train) {
  TaskSourceSpec s;
  s.name = name;
  s.kind = cfg.get_string(prefix + "kind", s.kind);
  s.path = cfg.get_string(prefix + "path", "");
  s.image_side = cfg.get_size(prefix + "image_side", s.image_side);
  s.alphabets = cfg.get_size(prefix + "alphabets", s.alphabets);
  s.classes_per_alphabet = cfg.get_size(prefix + "classes_per_alphabet", s.classes_per_alphabet);
  s.instances_per_class = cfg.get_size(prefix + "instances_per_class", s.instances_per_class);
  s.input_dim = cfg.get_size(prefix + "input_dim", s.input_dim);
  s.noise_sigma = cfg.get_double(prefix + "noise_sigma", s.noise_sigma);
  s.train_alphabets = cfg.get_index_list(prefix + "train");
  if (require_train && s.train_alphabets.empty()) {
    throw UsageError("meta-training needs an explicit " + prefix + "train alphabet list");
  }
  s.eval_alphabets = cfg.get_index_list(prefix + "eval");
  return s;
}

TaskSource load_source(const Config& cfg, const std::string& prefix, const std::string& name, std::uint64_t seed,
                       bool require_train) {
  const TaskSourceSpec spec = read_source(cfg, prefix, name, require_train);
  const std::uint64_t source_seed = cfg.get_u64(prefix + "seed", seed);
  return load_task_source(spec, source_seed);
}

void reject_unknown(const Config& cfg) {
  const auto unused = cfg.unused_keys();
  if (unused.empty()) return;
  std::string list;
  for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
  throw UsageError("unknown configuration key(s): " + list);
}

std::filesystem::path require_out(const CommandContext& ctx) {
  if (ctx.out_dir.empty()) throw UsageError(ctx.command + " needs --out <directory>");
  std::filesystem::create_directories(ctx.out_dir);
  return ctx.out_dir;
}

void write_manifest(const CommandContext& ctx, const std::filesystem::path& dir) {
  ctx.config.record_effective("command", ctx.command);
  ctx.config.record_effective("version", WARPADAM_VERSION);
  write_text(dir / "manifest.txt", ctx.config.manifest_text());
}

// Manifests carry these two keys so they can be fed back as configs.
void consume_manifest_keys(const CommandContext& ctx) {
  const Config& cfg = ctx.config;
  if (cfg.has("command")) {
    const std::string c = cfg.get_string("command", ctx.command);
    if (c != ctx.command) throw UsageError("config was written by '" + c + "', not '" + ctx.command + "'");
  }
  cfg.touch("version");
}

int cmd_meta_train(CommandContext& ctx, std::ostream& out) {
  const Config& cfg = ctx.config;
  const std::uint64_t seed = read_seed(cfg);
  RunConfig rc = read_run(View(cfg), seed, OptimizerKind::WarpAdam, "warpadam");
  rc.meta_enabled = true;
  cfg.record_effective("meta.enabled", "true");
  rc.meta_outer_steps = cfg.get_size("meta.outer_steps", 100);
  const std::size_t held_out = cfg.get_size("meta.held_out_episodes", 20);
  const TaskSource source = load_source(cfg, "source.", "source", seed, true);
  reject_unknown(cfg);
  rc.validate();
  const auto dir = require_out(ctx);

  MetaTrainResult meta;
  const WarpSet warps = prepare_warps(rc, source, &meta);
  write_text(dir / "meta_curve.csv", meta_curve_csv(meta.curve));
  write_manifest(ctx, dir);
  if (meta.diverged) {
    write_text(dir / "divergence.txt", meta.report + "\n");
    out << "meta-training diverged: " << meta.report << "\n";
    return kExitDiverged;
  }
  save_warps(warps, dir / "warp.bin");

  const MlpSpec spec = bench_model(rc, source.table.input_dim);
  const Learner learner = mlp_classifier(spec, bench_init(spec, rc.seed));
  MetaConfig mc = rc.meta;
  mc.placement = rc.placement;
  const HeldOutLoss h = held_out_query_loss(learner, warps, source, rc.geometry, mc, held_out, rc.seed);
  write_text(dir / "held_out.txt", "identity_query_loss=" + format_double(h.identity) +
                                       "\nlearned_query_loss=" + format_double(h.learned) + "\n");
  out << "outer steps: " << meta.curve.size() << "\n"
      << "held-out query loss: identity " << format_double(h.identity) << ", learned " << format_double(h.learned)
      << "\n";
  return kExitOk;
}

int cmd_run(CommandContext& ctx, std::ostream& out) {
  const Config& cfg = ctx.config;
  const std::uint64_t seed = read_seed(cfg);
  const OptimizerKind kind = parse_kind(cfg.get_string("optim.kind", "adam"));
  const RunConfig rc = read_run(View(cfg), seed, kind, to_string(kind));
  const std::string checkpoint = cfg.get_string("warp.checkpoint", "");
  const TaskSource source = load_source(cfg, "source.", "source", seed, rc.meta_enabled);
  reject_unknown(cfg);
  rc.validate();
  if (!checkpoint.empty() && kind != OptimizerKind::WarpAdam) {
    throw UsageError("warp.checkpoint only applies to optim.kind=warpadam");
  }
  const auto dir = require_out(ctx);

  std::optional<WarpSet> warps;
  if (!checkpoint.empty()) warps = load_warps(checkpoint);
  const RunResult r = run_sequential_tasks(rc, source, warps ? &*warps : nullptr);
  emit_csv(r.records, dir / "curve.csv");
  write_manifest(ctx, dir);
  if (r.diverged) {
    write_text(dir / "divergence.txt", r.report + "\n");
    out << r.report << "\n";
    return kExitDiverged;
  }
  const ConvergenceEpoch ce = convergence_epoch(std::span<const CurveRecord>(r.records));
  out << "records: " << r.records.size() << "\n"
      << "convergence epoch: " << ce.epoch << (ce.degenerate ? " (degenerate)" : "") << "\n"
      << "validation accuracy %: " << format_double(validation_accuracy_pct(r.records)) << "\n";
  return kExitOk;
}

int cmd_compare(CommandContext& ctx, std::ostream& out) {
  const Config& cfg = ctx.config;
  const std::uint64_t seed = read_seed(cfg);
  const auto algorithms = cfg.get_list(
      "compare.algorithms",
      {"SGD:sgd", "Momentum:momentum", "RAdam:radam", "AdamW:adamw", "WarpedAdam:warpadam"});
  if (algorithms.size() < 2) throw UsageError("compare needs at least two entries in compare.algorithms");
  const bool parallel = cfg.get_bool("compare.parallel", false);

  std::vector<RunConfig> configs;
  bool any_meta = false;
  for (const auto& entry : algorithms) {
    const auto colon = entry.find(':');
    const std::string label = entry.substr(0, colon);
    const std::string kind = colon == std::string::npos ? entry : entry.substr(colon + 1);
    if (label.empty()) throw UsageError("compare.algorithms: empty label in '" + entry + "'");
    for (const auto& c : configs) {
      if (c.label == label) throw UsageError("compare.algorithms: duplicate label '" + label + "'");
    }
    configs.push_back(read_run(View(cfg, "algo." + label + "."), seed, parse_kind(kind), label));
    any_meta = any_meta || configs.back().meta_enabled;
  }

  std::vector<TaskSource> sources;
  const auto names = cfg.get_list("compare.sources", {});
  if (names.empty()) {
    sources.push_back(load_source(cfg, "source.", "source", seed, any_meta));
  } else {
    for (const auto& n : names) sources.push_back(load_source(cfg, "source." + n + ".", n, seed, any_meta));
  }
  reject_unknown(cfg);
  for (const auto& c : configs) c.validate();
  const auto dir = require_out(ctx);

  std::vector<ComparisonBlock> blocks;
  for (const auto& s : sources) blocks.push_back({s.name, compare_optimizers(configs, s, parallel)});
  write_text(dir / "comparison.csv", comparison_csv(blocks));
  write_manifest(ctx, dir);
  for (const auto& b : blocks) {
    out << "source " << b.source << "\n";
    for (const auto& r : b.rows) {
      out << "  " << r.algorithm << ": epochs " << r.convergence_epochs << ", accuracy "
          << format_double(r.validation_accuracy_pct) << "%" << (r.diverged ? " (diverged)" : "") << "\n";
    }
  }
  return kExitOk;
}

int cmd_check(CommandContext& ctx, std::ostream& out) {
  const Config& cfg = ctx.config;
  CheckOptions opt;
  opt.trials = cfg.get_size("check.trials", opt.trials);
  opt.seed = cfg.get_u64("check.seed", opt.seed);
  opt.corrupt_rule = ctx.corrupt_rule;
  reject_unknown(cfg);
  if (opt.trials == 0) throw UsageError("check.trials must be positive");

  auto results = run_gradient_checks(opt);
  for (auto& r : run_warp_checks(opt)) results.push_back(std::move(r));
  bool ok = true;
  const CheckResult* worst = nullptr;
  std::string report;
  for (const auto& r : results) {
    ok = ok && r.passed;
    if (!r.passed && (!worst || r.max_error / std::max(r.tolerance, 1e-300) >
                                    worst->max_error / std::max(worst->tolerance, 1e-300))) {
      worst = &r;
    }
    report += std::string(r.passed ? "PASS " : "FAIL ") + r.name + " trials=" + std::to_string(r.trials) +
              " max_error=" + format_double(r.max_error) + " tol=" + format_double(r.tolerance) + "\n";
  }
  out << report;
  if (worst) out << "worst failure: " << worst->name << " max_error=" << format_double(worst->max_error) << "\n";
  if (!ctx.out_dir.empty()) {
    const auto dir = require_out(ctx);
    write_text(dir / "check.txt", report);
    write_manifest(ctx, dir);
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_import(CommandContext& ctx, std::ostream& out) {
  const Config& cfg = ctx.config;
  const std::string root = cfg.get_string("import.root", "");
  const std::size_t side = cfg.get_size("import.image_side", 28);
  reject_unknown(cfg);
  if (root.empty()) throw UsageError("import needs import.root=<directory of alphabet/character/*.pgm>");
  const auto dir = require_out(ctx);
  const ClassTable table = import_image_classes(root, side);
  save_table(table, dir / "table.bin");
  write_manifest(ctx, dir);
  std::size_t classes = 0;
  std::size_t instances = 0;
  for (const auto& a : table.alphabets) {
    classes += a.characters.size();
    for (const auto& c : a.characters) instances += c.instances.size();
  }
  out << "alphabets: " << table.alphabets.size() << ", characters: " << classes << ", images: " << instances
      << ", empty character directories skipped: " << table.skipped_empty << "\n";
  return kExitOk;
}

}  // namespace

int run_command(CommandContext& ctx, std::ostream& out, std::ostream& err) {
  (void)err;
  consume_manifest_keys(ctx);
  if (ctx.command == "meta-train") return cmd_meta_train(ctx, out);
  if (ctx.command == "run") return cmd_run(ctx, out);
  if (ctx.command == "compare") return cmd_compare(ctx, out);
  if (ctx.command == "check") return cmd_check(ctx, out);
  if (ctx.command == "import") return cmd_import(ctx, out);
  throw UsageError("unknown command '" + ctx.command + "'");
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"WarpAdam: warped-gradient Adam, baselines and meta-learned warp matrices"};
  app.set_version_flag("--version", WARPADAM_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  std::string corrupt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--set", sets, "override one key (key=value), repeatable")->take_all();
  };
  add_common(app.add_subcommand("meta-train", "meta-learn warp matrices on the train alphabets"));
  add_common(app.add_subcommand("run", "train one optimizer through a sequence of tasks"));
  add_common(app.add_subcommand("compare", "compare optimizers on one or more task sources"));
  auto* check = app.add_subcommand("check", "run the finite-difference gradient checks");
  add_common(check);
  check->add_option("--corrupt-rule", corrupt)->group("");
  add_common(app.add_subcommand("import", "import a PGM image tree into a cached table"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandContext ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.config = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& s : sets) ctx.config.set_assignment(s);
    ctx.out_dir = out_dir;
    ctx.corrupt_rule = corrupt;
    return run_command(ctx, out, err);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace warpadam
