#include "warpadam/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include "warpadam/config.hpp"
#include "warpadam/error.hpp"

namespace warpadam {

namespace {

// Independent generator streams derived from one run seed.
enum Stream : std::uint32_t { kModelInit = 1, kEpisodes = 2, kMetaTasks = 3, kSynthetic = 4, kHeldOut = 5 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

struct Metrics {
  double loss;
  double acc;
};

Metrics evaluate(const MlpSpec& spec, std::span<const Tensor> params, const Batch& batch) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(g.constant(p));
  const Var logits = mlp_forward(spec, vars, g.constant(batch.x));
  const Var loss = softmax_cross_entropy(logits, batch.labels);
  return {loss.value().item(), accuracy(logits.value(), batch.labels)};
}

std::vector<std::size_t> all_alphabets(const ClassTable& t) {
  std::vector<std::size_t> out(t.alphabets.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace

TaskSource load_task_source(const TaskSourceSpec& spec, std::uint64_t seed) {
  TaskSource src;
  src.name = spec.name;
  if (spec.kind == "synthetic") {
    auto rng = stream_rng(seed, kSynthetic);
    src.table = synth_proto_tasks(spec.alphabets, spec.classes_per_alphabet, spec.instances_per_class,
                                  spec.input_dim, spec.noise_sigma, rng);
  } else if (spec.kind == "pgm") {
    src.table = import_image_classes(spec.path, spec.image_side);
  } else if (spec.kind == "table") {
    src.table = load_table(spec.path);
  } else {
    throw ContractError("unknown task source kind '" + spec.kind + "' (synthetic, pgm, table)");
  }
  if (src.table.alphabets.empty()) throw ContractError("task source '" + spec.name + "' has no alphabets");
  check_alphabet_split(src.table, spec.train_alphabets, spec.eval_alphabets);
  src.train = spec.train_alphabets;
  src.eval = spec.eval_alphabets.empty() ? all_alphabets(src.table) : spec.eval_alphabets;
  if (!spec.train_alphabets.empty() && spec.eval_alphabets.empty()) {
    // Without an explicit eval list, evaluation uses every alphabet not held for training.
    src.eval.clear();
    for (std::size_t a = 0; a < src.table.alphabets.size(); ++a) {
      bool in_train = false;
      for (auto t : spec.train_alphabets) in_train = in_train || t == a;
      if (!in_train) src.eval.push_back(a);
    }
    if (src.eval.empty()) throw ContractError("every alphabet is in the train split; nothing left to evaluate");
  }
  return src;
}

void RunConfig::validate() const {
  hyper.validate();
  if (n_tasks < 1) throw ContractError("n_tasks must be >= 1");
  if (steps_per_task < 1) throw ContractError("steps_per_task must be >= 1");
  if (eval_every < 1) throw ContractError("eval_every must be >= 1");
  if (hidden < 1) throw ContractError("hidden width must be >= 1");
  if (meta_enabled) {
    if (optimizer != OptimizerKind::WarpAdam) throw ContractError("meta-training only applies to warpadam");
    meta.validate();
  }
}

bool CurveRecord::same_metrics(const CurveRecord& o) const {
  auto same = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };
  return task_index == o.task_index && step == o.step && same(train_loss, o.train_loss) &&
         same(train_acc, o.train_acc) && same(val_loss, o.val_loss) && same(val_acc, o.val_acc);
}

MlpSpec bench_model(const RunConfig& cfg, std::size_t input_dim) {
  return MlpSpec{{input_dim, cfg.hidden, cfg.geometry.n_way}, cfg.activation};
}

std::vector<Tensor> bench_init(const MlpSpec& spec, std::uint64_t seed) {
  auto rng = stream_rng(seed, kModelInit);
  return init_mlp(spec, rng);
}

namespace {

WarpSet identity_in_forms(const RunConfig& cfg, std::span<const Shape> shapes) {
  return cfg.warp_form ? identity_warps(shapes, *cfg.warp_form) : default_warps(shapes);
}

}  // namespace

WarpSet prepare_warps(const RunConfig& cfg, const TaskSource& source, MetaTrainResult* meta_out) {
  const MlpSpec spec = bench_model(cfg, source.table.input_dim);
  const auto shapes = spec.parameter_shapes();
  WarpSet warps = identity_in_forms(cfg, shapes);
  if (!cfg.meta_enabled) return warps;
  if (source.train.empty()) {
    throw ContractError("meta-training needs an explicit train alphabet list for source '" + source.name + "'");
  }
  const Learner learner = mlp_classifier(spec, bench_init(spec, cfg.seed));
  auto rng = stream_rng(cfg.seed, kMetaTasks);
  const TaskBatchSampler sampler = [&](std::size_t) {
    std::vector<Task> batch;
    for (std::size_t i = 0; i < cfg.meta.tasks_per_outer_step; ++i) {
      batch.push_back(to_task(sample_episode(source.table, cfg.geometry, rng, source.train)));
    }
    return batch;
  };
  MetaConfig meta = cfg.meta;
  meta.placement = cfg.placement;
  MetaTrainResult result = meta_train(learner, std::move(warps), sampler, cfg.meta_outer_steps, meta);
  WarpSet out = result.warps;
  if (meta_out) *meta_out = std::move(result);
  return out;
}

RunResult run_sequential_tasks(const RunConfig& cfg, const TaskSource& source, const WarpSet* warps) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed_ms = [&] {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
  };

  const MlpSpec spec = bench_model(cfg, source.table.input_dim);
  const auto shapes = spec.parameter_shapes();
  std::vector<Tensor> params = bench_init(spec, cfg.seed);
  const Learner learner = mlp_classifier(spec, params);

  RunResult result;
  WarpSet use;
  if (cfg.optimizer == OptimizerKind::WarpAdam) {
    if (warps) {
      use = *warps;
    } else {
      MetaTrainResult meta;
      use = prepare_warps(cfg, source, &meta);
      result.meta_train_ms = static_cast<double>(elapsed_ms());
      if (meta.diverged) {
        result.diverged = true;
        result.report = "meta-training diverged: " + meta.report;
        return result;
      }
    }
  }
  ParameterOptimizer opt(cfg.optimizer, cfg.hyper, shapes, use, cfg.placement);

  auto rng = stream_rng(cfg.seed, kEpisodes);
  for (std::size_t task_index = 0; task_index < cfg.n_tasks; ++task_index) {
    const Episode episode = sample_episode(source.table, cfg.geometry, rng, source.eval);
    const Task task = to_task(episode);
    for (std::size_t step = 1; step <= cfg.steps_per_task; ++step) {
      std::string failure;
      try {
        const LossAndGrad lg = loss_and_grad(learner.loss, params, task.support);
        if (!std::isfinite(lg.loss)) {
          failure = "non-finite training loss";
        } else {
          opt.step(params, lg.grads);
        }
      } catch (const NumericError& e) {
        failure = e.what();
      }
      const bool due = step % cfg.eval_every == 0 || step == cfg.steps_per_task;
      if (!due && failure.empty()) continue;

      const Metrics train = evaluate(spec, params, task.support);
      const Metrics val = evaluate(spec, params, task.query);
      result.records.push_back(
          {task_index, step, train.loss, train.acc, val.loss, val.acc, elapsed_ms()});
      if (failure.empty() && !(std::isfinite(train.loss) && std::isfinite(val.loss))) {
        failure = "non-finite evaluation loss";
      }
      if (!failure.empty()) {
        result.diverged = true;
        result.report = "diverged at task " + std::to_string(task_index) + " step " + std::to_string(step) +
                        ": " + failure;
        return result;
      }
    }
  }
  return result;
}

ConvergenceEpoch convergence_epoch(std::span<const double> val_acc, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("convergence fraction must lie in (0, 1]");
  if (val_acc.empty()) throw ContractError("convergence_epoch needs at least one evaluation");
  double best = 0.0;
  for (double a : val_acc) best = std::max(best, a);
  if (best <= 0.0) return {val_acc.size(), true};
  const double threshold = fraction * best;
  for (std::size_t i = 0; i < val_acc.size(); ++i) {
    if (val_acc[i] >= threshold) return {i + 1, false};
  }
  return {val_acc.size(), true};
}

namespace {

std::vector<double> end_of_task_val_acc(std::span<const CurveRecord> curve) {
  std::vector<double> out;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (i + 1 == curve.size() || curve[i + 1].task_index != curve[i].task_index) out.push_back(curve[i].val_acc);
  }
  return out;
}

}  // namespace

ConvergenceEpoch convergence_epoch(std::span<const CurveRecord> curve, double fraction) {
  const auto acc = end_of_task_val_acc(curve);
  return convergence_epoch(std::span<const double>(acc), fraction);
}

double validation_accuracy_pct(std::span<const CurveRecord> curve) {
  const auto acc = end_of_task_val_acc(curve);
  if (acc.empty()) return std::nan("");
  double s = 0.0;
  for (double a : acc) s += a;
  return 100.0 * s / static_cast<double>(acc.size());
}

std::vector<ComparisonRow> compare_optimizers(std::span<const RunConfig> configs, const TaskSource& source,
                                              bool parallel) {
  if (configs.empty()) throw ContractError("compare_optimizers needs at least one config");
  for (const auto& c : configs) {
    const auto& f = configs.front();
    if (c.seed != f.seed || c.n_tasks != f.n_tasks || c.steps_per_task != f.steps_per_task ||
        c.eval_every != f.eval_every || c.geometry.n_way != f.geometry.n_way ||
        c.geometry.k_shot != f.geometry.k_shot || c.geometry.query_per_class != f.geometry.query_per_class ||
        c.hidden != f.hidden || c.activation != f.activation) {
      throw ContractError("compared configs must share seed, task and model settings ('" + c.label + "' differs)");
    }
  }
  const auto count = static_cast<std::ptrdiff_t>(configs.size());
  std::vector<ComparisonRow> rows(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const RunResult r = run_sequential_tasks(configs[i], source);
      ComparisonRow row;
      row.algorithm = configs[i].label.empty() ? to_string(configs[i].optimizer) : configs[i].label;
      row.diverged = r.diverged;
      row.training_time_s = r.records.empty() ? 0.0 : static_cast<double>(r.records.back().wall_ms) / 1000.0;
      if (!r.records.empty()) {
        const ConvergenceEpoch ce = convergence_epoch(std::span<const CurveRecord>(r.records));
        row.convergence_epochs = ce.epoch;
        row.degenerate = ce.degenerate;
      }
      row.validation_accuracy_pct = validation_accuracy_pct(r.records);
      rows[i] = std::move(row);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string curve_csv(std::span<const CurveRecord> records) {
  std::string out = std::string(kCurveHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.task_index) + "," + std::to_string(r.step) + "," + format_double(r.train_loss) + "," +
           format_double(r.train_acc) + "," + format_double(r.val_loss) + "," + format_double(r.val_acc) + "," +
           std::to_string(r.wall_ms) + "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void emit_csv(std::span<const CurveRecord> records, const std::filesystem::path& path) {
  write_text(path, curve_csv(records));
}

std::vector<CurveRecord> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw ParseError("curve csv: missing or wrong header");
  std::vector<CurveRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ParseError("curve csv line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      out.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                     std::stod(f[5]), std::stoull(f[6])});
    } catch (const std::exception&) {
      throw ParseError("curve csv line " + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

std::string comparison_csv(std::span<const ComparisonBlock> blocks) {
  std::string out = std::string(kComparisonHeader) + "\n";
  std::string notes;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (b) out += "\n";
    for (const auto& r : blocks[b].rows) {
      out += r.algorithm + "," + format_double(r.training_time_s) + "," + std::to_string(r.convergence_epochs) + "," +
             format_double(r.validation_accuracy_pct) + "\n";
      if (r.diverged) notes += "# diverged: block " + std::to_string(b + 1) + " " + r.algorithm + "\n";
      if (r.degenerate) notes += "# degenerate accuracy curve: block " + std::to_string(b + 1) + " " + r.algorithm + "\n";
    }
  }
  out += "\n";
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    out += "# block " + std::to_string(b + 1) + ": source=" + blocks[b].source + "\n";
  }
  out += "# training_time_s is wall-clock and machine-dependent; it is not comparable across machines\n";
  out += "# convergence_epochs: first task (epoch) reaching 0.99 of the run's peak end-of-task validation accuracy\n";
  out += "# validation_accuracy_pct: mean end-of-task query accuracy\n";
  out += notes;
  out += "# published reference values for the Omniglot benchmark, quoted only (not reproduced, not asserted):\n";
  out += "# block 1: SGD 1200 s 30 epochs 75.2 %; Momentum 1050 s 28 epochs 76.5 %; RAdam 1250 s 26 epochs 77.8 %; "
         "AdamW 1100 s 27 epochs 78.3 %; WarpedAdam 1000 s 24 epochs 79.6 %\n";
  out += "# block 2: SGD 450 s 15 epochs 98.2 %; Momentum 400 s 13 epochs 98.5 %; RAdam 470 s 12 epochs 98.8 %; "
         "AdamW 420 s 14 epochs 99.0 %; WarpedAdam 380 s 11 epochs 99.2 %\n";
  return out;
}

std::string meta_curve_csv(std::span<const MetaCurvePoint> curve) {
  std::string out = "outer_step,query_loss,tod_penalty\n";
  for (const auto& p : curve) {
    out += std::to_string(p.outer_step) + "," + format_double(p.query_loss) + "," + format_double(p.penalty) + "\n";
  }
  return out;
}

HeldOutLoss held_out_query_loss(const Learner& learner, const WarpSet& learned, const TaskSource& source,
                                const EpisodeGeometry& geometry, const MetaConfig& cfg, std::size_t episodes,
                                std::uint64_t seed) {
  if (episodes == 0) throw ContractError("held_out_query_loss needs at least one episode");
  WarpSet identity;
  for (const auto& P : learned) identity.push_back(WarpMatrix::identity(P.dim()));
  auto rng = stream_rng(seed, kHeldOut);
  HeldOutLoss out;
  for (std::size_t e = 0; e < episodes; ++e) {
    const Task task = to_task(sample_episode(source.table, geometry, rng, source.eval));
    out.identity += adapted_query_loss(task, learner, identity, cfg);
    out.learned += adapted_query_loss(task, learner, learned, cfg);
  }
  out.identity /= static_cast<double>(episodes);
  out.learned /= static_cast<double>(episodes);
  return out;
}

}  // namespace warpadam
