#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "warpadam/meta.hpp"
#include "warpadam/nn.hpp"
#include "warpadam/optim.hpp"
#include "warpadam/tasks.hpp"

namespace warpadam {

struct TaskSourceSpec {
  std::string name = "synthetic";
  std::string kind = "synthetic";  // synthetic | pgm | table
  std::filesystem::path path;      // pgm root or cached table
  std::size_t image_side = 28;
  // synthetic family
  std::size_t alphabets = 10;
  std::size_t classes_per_alphabet = 10;
  std::size_t instances_per_class = 20;
  std::size_t input_dim = 16;
  double noise_sigma = 0.3;
  // Explicit alphabet split. Sequential runs draw from eval (all alphabets
  // when empty); meta-training draws from train and requires it.
  std::vector<std::size_t> train_alphabets;
  std::vector<std::size_t> eval_alphabets;
};

struct TaskSource {
  std::string name;
  ClassTable table;
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

// The synthetic family is generated from `seed`.
TaskSource load_task_source(const TaskSourceSpec& spec, std::uint64_t seed);

struct RunConfig {
  std::string label;
  OptimizerKind optimizer = OptimizerKind::Adam;
  HyperParams hyper;
  // WarpAdam only: meta-train P on the train alphabets before the run.
  bool meta_enabled = false;
  MetaConfig meta;
  std::size_t meta_outer_steps = 0;
  std::optional<WarpForm> warp_form;  // default structural forms when unset
  WarpPlacement placement = WarpPlacement::Gradient;

  EpisodeGeometry geometry;
  std::size_t n_tasks = 10;
  std::size_t steps_per_task = 50;
  std::size_t eval_every = 10;
  std::uint64_t seed = 0;
  std::size_t hidden = 64;
  Activation activation = Activation::Tanh;

  void validate() const;
};

struct CurveRecord {
  std::size_t task_index = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::uint64_t wall_ms = 0;  // machine-dependent, never compared

  // Everything but wall_ms, compared bit-for-bit.
  bool same_metrics(const CurveRecord& other) const;
};

struct RunResult {
  std::vector<CurveRecord> records;
  bool diverged = false;
  std::string report;
  double meta_train_ms = 0.0;
};

// input -> hidden (activation) -> n_way logits.
MlpSpec bench_model(const RunConfig& cfg, std::size_t input_dim);
// The model's initial parameters for this seed; shared by every config with that seed.
std::vector<Tensor> bench_init(const MlpSpec& spec, std::uint64_t seed);

// Warp matrices a WarpAdam run starts from: identity in the configured forms,
// meta-trained first when cfg.meta_enabled.
WarpSet prepare_warps(const RunConfig& cfg, const TaskSource& source, MetaTrainResult* meta_out = nullptr);

// Trains one model (fresh per run, shared across tasks) through n_tasks
// episodes in sequence, steps_per_task support steps each, recording support
// and query metrics every eval_every steps and at the end of each task. A
// non-finite loss is recorded and then stops the run.
RunResult run_sequential_tasks(const RunConfig& cfg, const TaskSource& source, const WarpSet* warps = nullptr);

struct ConvergenceEpoch {
  std::size_t epoch = 0;  // 1-indexed
  bool degenerate = false;
};

// First epoch whose val_acc reaches fraction * max(val_acc).
ConvergenceEpoch convergence_epoch(std::span<const double> val_acc_per_epoch, double fraction = 0.99);
// One epoch per task: its last record.
ConvergenceEpoch convergence_epoch(std::span<const CurveRecord> curve, double fraction = 0.99);

struct ComparisonRow {
  std::string algorithm;
  double training_time_s = 0.0;
  std::size_t convergence_epochs = 0;
  double validation_accuracy_pct = 0.0;
  bool diverged = false;
  bool degenerate = false;
};

// Mean end-of-task validation accuracy over the run, in percent.
double validation_accuracy_pct(std::span<const CurveRecord> curve);

// Runs every config on the same source. Configs must share seed and task
// settings. Rows come back in config order.
std::vector<ComparisonRow> compare_optimizers(std::span<const RunConfig> configs, const TaskSource& source,
                                              bool parallel = false);

struct ComparisonBlock {
  std::string source;
  std::vector<ComparisonRow> rows;
};

inline constexpr const char* kCurveHeader = "task_index,step,train_loss,train_acc,val_loss,val_acc,wall_ms";
inline constexpr const char* kComparisonHeader =
    "algorithm,training_time_s,convergence_epochs,validation_accuracy_pct";

std::string curve_csv(std::span<const CurveRecord> records);
void emit_csv(std::span<const CurveRecord> records, const std::filesystem::path& path);
std::vector<CurveRecord> parse_curve_csv(const std::string& text);

// Header, one block of rows per source separated by a blank line, then '#'
// footer lines (block legend, divergence notes, published reference values).
std::string comparison_csv(std::span<const ComparisonBlock> blocks);

std::string meta_curve_csv(std::span<const MetaCurvePoint> curve);

void write_text(const std::filesystem::path& path, const std::string& text);

struct HeldOutLoss {
  double identity = 0.0;
  double learned = 0.0;
};

// Mean post-adaptation query loss over `episodes` eval-alphabet episodes,
// for identity warps versus `learned`.
HeldOutLoss held_out_query_loss(const Learner& learner, const WarpSet& learned, const TaskSource& source,
                                const EpisodeGeometry& geometry, const MetaConfig& cfg, std::size_t episodes,
                                std::uint64_t seed);

}  // namespace warpadam
