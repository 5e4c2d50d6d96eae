#include <gtest/gtest.h>

#include <random>
#include <fstream>
#include <sstream>

#include "warpadam/bench.hpp"
#include "warpadam/error.hpp"

using namespace warpadam;

namespace {

TaskSource small_source(std::uint64_t seed = 1) {
  TaskSourceSpec spec;
  spec.alphabets = 4;
  spec.classes_per_alphabet = 6;
  spec.instances_per_class = 20;
  spec.input_dim = 8;
  return load_task_source(spec, seed);
}

RunConfig small_run(OptimizerKind kind, const std::string& label = "") {
  RunConfig c;
  c.label = label;
  c.optimizer = kind;
  c.hyper.eta = 0.01;
  c.n_tasks = 3;
  c.steps_per_task = 20;
  c.eval_every = 5;
  c.hidden = 8;
  c.seed = 3;
  return c;
}

bool same_curves(const std::vector<CurveRecord>& a, const std::vector<CurveRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i].same_metrics(b[i])) return false;
  return true;
}

}  // namespace

TEST(Convergence, Examples) {
  const std::vector<double> rising{0.5, 0.7, 0.79, 0.8, 0.8};
  EXPECT_EQ(convergence_epoch(std::span<const double>(rising)).epoch, 4u);
  const std::vector<double> flat{0.6, 0.6, 0.6};
  EXPECT_EQ(convergence_epoch(std::span<const double>(flat)).epoch, 1u);
  const std::vector<double> zeros{0.0, 0.0};
  const ConvergenceEpoch z = convergence_epoch(std::span<const double>(zeros));
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.epoch, 2u);
  EXPECT_THROW(convergence_epoch(std::span<const double>(rising), 0.0), ContractError);
}

TEST(Convergence, MonotoneInFraction) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> acc(12);
    for (double& a : acc) a = d(rng);
    std::size_t prev = 0;
    for (double f : {0.5, 0.8, 0.9, 0.95, 0.99, 1.0}) {
      const std::size_t e = convergence_epoch(std::span<const double>(acc), f).epoch;
      EXPECT_GE(e, prev);
      prev = e;
    }
  }
}

TEST(Convergence, OneEpochPerTask) {
  const std::vector<CurveRecord> curve{{0, 5, 0, 0, 0, 0.2, 0}, {0, 10, 0, 0, 0, 0.4, 0},
                                       {1, 5, 0, 0, 0, 0.9, 0}, {1, 10, 0, 0, 0, 0.5, 0},
                                       {2, 5, 0, 0, 0, 0.1, 0}, {2, 10, 0, 0, 0, 0.6, 0}};
  // End-of-task accuracies: 0.4, 0.5, 0.6.
  EXPECT_EQ(convergence_epoch(std::span<const CurveRecord>(curve)).epoch, 3u);
  EXPECT_DOUBLE_EQ(validation_accuracy_pct(curve), 50.0);
}

TEST(CurveCsv, ByteExactFixture) {
  const std::vector<CurveRecord> r{{0, 10, 0.1, 0.5, 1.25, 1.0, 42}, {1, 20, 2.0, 0.0, 0.3, 0.2, 7}};
  EXPECT_EQ(curve_csv(r),
            "task_index,step,train_loss,train_acc,val_loss,val_acc,wall_ms\n"
            "0,10,0.10000000000000001,0.5,1.25,1,42\n"
            "1,20,2,0,0.29999999999999999,0.20000000000000001,7\n");
  EXPECT_EQ(curve_csv({}), std::string(kCurveHeader) + "\n");
}

TEST(CurveCsv, RoundTripIsExact) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(0.0, 3.0);
  std::vector<CurveRecord> r;
  for (std::size_t i = 0; i < 20; ++i) r.push_back({i / 5, i % 5, d(rng), d(rng), d(rng), d(rng), i});
  const auto back = parse_curve_csv(curve_csv(r));
  EXPECT_TRUE(same_curves(r, back));
  EXPECT_THROW(parse_curve_csv("bad header\n"), ParseError);

  const auto path = std::filesystem::temp_directory_path() / "warpadam_curve_test.csv";
  emit_csv(r, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), curve_csv(r));
  std::filesystem::remove(path);
}

TEST(Source, EvalDefaultsToComplementOfTrain) {
  TaskSourceSpec spec;
  spec.alphabets = 4;
  spec.classes_per_alphabet = 6;
  spec.input_dim = 8;
  spec.train_alphabets = {0, 2};
  const TaskSource s = load_task_source(spec, 1);
  EXPECT_EQ(s.eval, (std::vector<std::size_t>{1, 3}));
  spec.eval_alphabets = {2};
  EXPECT_THROW(load_task_source(spec, 1), ContractError);
}

TEST(SequentialRun, RecordsAtEvalPointsAndTaskEnds) {
  RunConfig c = small_run(OptimizerKind::Adam);
  c.n_tasks = 1;
  c.steps_per_task = 12;
  const RunResult r = run_sequential_tasks(c, small_source());
  ASSERT_EQ(r.records.size(), 3u);  // steps 5, 10, 12
  EXPECT_EQ(r.records[0].step, 5u);
  EXPECT_EQ(r.records[2].step, 12u);
  EXPECT_FALSE(r.diverged);
  for (const auto& rec : r.records) {
    EXPECT_GE(rec.val_acc, 0.0);
    EXPECT_LE(rec.val_acc, 1.0);
  }
}

TEST(SequentialRun, IdentityWarpAdamReproducesAdam) {
  const TaskSource src = small_source();
  const RunResult adam = run_sequential_tasks(small_run(OptimizerKind::Adam), src);
  const RunResult warp = run_sequential_tasks(small_run(OptimizerKind::WarpAdam), src);
  EXPECT_TRUE(same_curves(adam.records, warp.records));
}

TEST(SequentialRun, DeterministicPerSeedAndSeedSensitive) {
  const TaskSource src = small_source();
  RunConfig c = small_run(OptimizerKind::Momentum);
  const RunResult a = run_sequential_tasks(c, src);
  const RunResult b = run_sequential_tasks(c, src);
  EXPECT_TRUE(same_curves(a.records, b.records));
  c.seed = 4;
  EXPECT_FALSE(same_curves(a.records, run_sequential_tasks(c, src).records));
}

TEST(SequentialRun, DivergenceIsReported) {
  RunConfig c = small_run(OptimizerKind::Sgd);
  c.hyper.eta = 1e300;
  c.activation = Activation::Relu;
  const RunResult r = run_sequential_tasks(c, small_source());
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.report.empty());
  EXPECT_FALSE(r.records.empty());
}

TEST(Compare, RowOrderAndIdenticalConfigs) {
  const TaskSource src = small_source();
  const std::vector<RunConfig> configs{small_run(OptimizerKind::Adam, "first"), small_run(OptimizerKind::Sgd, "second"),
                                       small_run(OptimizerKind::Adam, "third")};
  const auto rows = compare_optimizers(configs, src);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].algorithm, "first");
  EXPECT_EQ(rows[1].algorithm, "second");
  EXPECT_EQ(rows[2].algorithm, "third");
  EXPECT_EQ(rows[0].convergence_epochs, rows[2].convergence_epochs);
  EXPECT_EQ(rows[0].validation_accuracy_pct, rows[2].validation_accuracy_pct);
}

TEST(Compare, RejectsMismatchedSettings) {
  std::vector<RunConfig> configs{small_run(OptimizerKind::Adam, "a"), small_run(OptimizerKind::Sgd, "b")};
  configs[1].seed = 99;
  EXPECT_THROW(compare_optimizers(configs, small_source()), ContractError);
}

TEST(ComparisonCsv, BlocksAndFooter) {
  const std::vector<ComparisonBlock> blocks{
      {"one", {{"SGD", 1.5, 3, 75.0, false, false}, {"AdamW", 2.0, 2, 80.0, false, false}}},
      {"two", {{"SGD", 0.5, 1, 98.0, true, false}, {"AdamW", 0.25, 4, 99.0, false, false}}}};
  const std::string csv = comparison_csv(blocks);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "algorithm,training_time_s,convergence_epochs,validation_accuracy_pct");
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  EXPECT_EQ(lines[0], "SGD,1.5,3,75");
  EXPECT_EQ(lines[1], "AdamW,2,2,80");
  EXPECT_EQ(lines[2], "");
  EXPECT_EQ(lines[3], "SGD,0.5,1,98");
  EXPECT_EQ(lines[5], "");
  for (std::size_t i = 6; i < lines.size(); ++i) EXPECT_EQ(lines[i][0], '#') << lines[i];
  EXPECT_NE(csv.find("# diverged: block 2 SGD"), std::string::npos);
  EXPECT_NE(csv.find("machine-dependent"), std::string::npos);
  EXPECT_NE(csv.find("79.6"), std::string::npos);
}

TEST(MetaCurveCsv, Layout) {
  const std::vector<MetaCurvePoint> c{{0, 0.5, 0.0}, {1, 0.25, 0.125}};
  EXPECT_EQ(meta_curve_csv(c), "outer_step,query_loss,tod_penalty\n0,0.5,0\n1,0.25,0.125\n");
}
