// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "warpadam/bench.hpp"
#include "warpadam/cli.hpp"
#include "warpadam/config.hpp"
#include "warpadam/gradcheck.hpp"
#include "warpadam/meta.hpp"
#include "warpadam/optim.hpp"
#include "warpadam/tasks.hpp"
#include "warpadam/warp_matrix.hpp"

using namespace warpadam;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kA2RelTol = 1e-10;
constexpr double kA3Tol = 1e-5;
constexpr double kA4Tol = 1e-4;
constexpr std::size_t kA5Seeds = 10;
constexpr std::size_t kA5MinWins = 8;
constexpr double kA7AbsTol = 1e-12;
constexpr double kA8Tol = 1e-6;
constexpr double kA1Seconds = 5, kA2Seconds = 5, kA3Seconds = 30, kA4Seconds = 60;
constexpr double kA5Seconds = 600, kA6Seconds = 600, kA7Seconds = 5, kA8Seconds = 1, kA9Seconds = 600;

struct Verdict {
  bool pass = false;
  std::string detail;
};

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = d(rng);
  return t;
}

struct FixedProblem {
  MlpSpec spec;
  Learner learner;
  Task task;
};

// Two-layer MLP on one fixed synthetic episode.
FixedProblem fixed_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ClassTable table = synth_proto_tasks(1, 5, 20, 16, 0.3, rng);
  const Task task = to_task(sample_episode(table, EpisodeGeometry{5, 5, 5}, rng));
  const MlpSpec spec{{16, 32, 5}, Activation::Tanh};
  return {spec, mlp_classifier(spec, init_mlp(spec, rng)), task};
}

using Stepper = std::function<StepResult(std::size_t tensor, const AdamState&, const Tensor& w, const Tensor& g)>;

// Parameter trajectory (one snapshot per step) under a per-tensor stepper.
std::vector<std::vector<Tensor>> trajectory(const FixedProblem& p, std::size_t steps, const Stepper& step) {
  std::vector<Tensor> w = p.learner.init;
  std::vector<AdamState> s;
  for (const auto& t : w) s.push_back(AdamState::fresh(t.shape()));
  std::vector<std::vector<Tensor>> out;
  for (std::size_t k = 0; k < steps; ++k) {
    const LossAndGrad lg = loss_and_grad(p.learner.loss, w, p.task.support);
    for (std::size_t i = 0; i < w.size(); ++i) {
      StepResult r = step(i, s[i], w[i], lg.grads[i]);
      s[i] = std::move(r.state);
      w[i] = std::move(r.w);
    }
    out.push_back(w);
  }
  return out;
}

Verdict a1_reduction() {
  const FixedProblem p = fixed_problem(101);
  const HyperParams h;
  const WarpSet identity = default_warps(p.spec.parameter_shapes());
  const auto adam = trajectory(p, 100, [&](std::size_t, const AdamState& s, const Tensor& w, const Tensor& g) {
    return adam_step(s, w, g, h);
  });
  const auto warp = trajectory(p, 100, [&](std::size_t i, const AdamState& s, const Tensor& w, const Tensor& g) {
    return warpadam_step(s, w, g, identity[i], h);
  });
  std::size_t mismatched_steps = 0;
  for (std::size_t k = 0; k < adam.size(); ++k) mismatched_steps += adam[k] == warp[k] ? 0 : 1;
  std::string forms;
  for (const auto& P : identity) forms += std::string(forms.empty() ? "" : "/") + to_string(P.form());
  return {mismatched_steps == 0,
          "100 steps, identity warps (" + forms + "), steps with any bit difference: " +
              std::to_string(mismatched_steps)};
}

Verdict a2_diagonal() {
  const FixedProblem p = fixed_problem(202);
  HyperParams h;
  h.epsilon = 0.0;
  std::mt19937_64 rng(2);
  WarpSet diag;
  for (const auto& s : p.spec.parameter_shapes()) {
    diag.push_back(WarpMatrix::diagonal(random_tensor({shape_size(s)}, rng, 0.1, 10.0).values()));
  }
  const auto adam = trajectory(p, 50, [&](std::size_t, const AdamState& s, const Tensor& w, const Tensor& g) {
    return adam_step(s, w, g, h);
  });
  const auto warp = trajectory(p, 50, [&](std::size_t i, const AdamState& s, const Tensor& w, const Tensor& g) {
    return warpadam_step(s, w, g, diag[i], h);
  });
  double worst = 0.0;
  for (std::size_t k = 0; k < adam.size(); ++k)
    for (std::size_t i = 0; i < adam[k].size(); ++i) worst = std::max(worst, relative_error(adam[k][i], warp[k][i]));
  return {worst <= kA2RelTol, "50 steps, eps=0, diagonal entries in (0.1, 10); max relative error " +
                                  format_double(worst) + " (tol " + format_double(kA2RelTol) + ")"};
}

std::string worst_of(const std::vector<CheckResult>& rs, bool& ok, double tol) {
  double worst = 0.0;
  std::string name;
  std::size_t min_trials = SIZE_MAX;
  for (const auto& r : rs) {
    ok = ok && r.passed && r.tolerance <= tol;
    min_trials = std::min(min_trials, r.trials);
    if (r.max_error >= worst) worst = r.max_error, name = r.name;
  }
  return std::to_string(rs.size()) + " checks, >= " + std::to_string(min_trials) + " trials each; worst " + name +
         " " + format_double(worst) + " (tol " + format_double(tol) + ")";
}

Verdict a3_gradients() {
  CheckOptions opt;
  opt.trials = 100;
  const auto rs = run_gradient_checks(opt);
  bool ok = true;
  const std::string detail = worst_of(rs, ok, kA3Tol);
  return {ok, detail};
}

Verdict a4_hypergradients() {
  CheckOptions opt;
  opt.trials = 100;
  std::vector<CheckResult> hyper;
  for (const auto& r : run_warp_checks(opt)) {
    if (r.name.rfind("hypergrad:", 0) == 0) hyper.push_back(r);
  }
  bool ok = !hyper.empty();
  const std::string detail = worst_of(hyper, ok, kA4Tol);
  return {ok, "30-parameter 4-4-2 MLP, Dense P, K in {3, 5}; " + detail};
}

int cli(std::vector<std::string> args);
std::string slurp(const fs::path& p);
fs::path scratch(const std::string& name);

double key_value(const std::string& text, const std::string& key) {
  const auto at = text.find(key + "=");
  return at == std::string::npos ? std::nan("") : std::stod(text.substr(at + key.size() + 1));
}

// 50 synthetic alphabets, 40 for meta-training and 10 held out.
Verdict a5_meta_learning() {
  std::size_t wins = 0;
  std::string diffs;
  for (std::uint64_t seed = 0; seed < kA5Seeds; ++seed) {
    const fs::path dir = scratch("a5");
    std::string train = "source.train=0";
    for (int a = 1; a < 40; ++a) train += "," + std::to_string(a);
    const int code = cli({"meta-train", "--out", dir.string(), "--set", "seed=" + std::to_string(seed), "--set",
                          "source.alphabets=50", "--set", train, "--set", "meta.outer_eta=0.001", "--set",
                          "meta.outer_steps=200", "--set", "meta.tasks_per_outer_step=8", "--set",
                          "meta.held_out_episodes=20"});
    if (code != 0) {
      diffs += " exit" + std::to_string(code);
      continue;
    }
    const std::string text = slurp(dir / "held_out.txt");
    const double identity = key_value(text, "identity_query_loss");
    const double learned = key_value(text, "learned_query_loss");
    if (learned <= identity) ++wins;
    char buf[32];
    std::snprintf(buf, sizeof buf, " %+.2e", learned - identity);
    diffs += buf;
  }
  return {wins >= kA5MinWins, "learned <= identity held-out query loss in " + std::to_string(wins) + "/" +
                                  std::to_string(kA5Seeds) + " seeds (need " + std::to_string(kA5MinWins) +
                                  "); learned - identity:" + diffs};
}

Verdict a6_tod_sweep() {
  std::vector<double> norms;
  std::string detail = "off-diagonal Frobenius norm for lambda {0, 1e-3, 1e-1}:";
  for (double lambda : {0.0, 1e-3, 1e-1}) {
    RunConfig c;
    c.optimizer = OptimizerKind::WarpAdam;
    c.meta_enabled = true;
    c.meta_outer_steps = 200;
    c.meta.tod_lambda = lambda;
    c.meta.outer_eta = 1e-3;
    c.meta.inner_hyper.eta = 0.01;
    c.warp_form = WarpForm::Dense;
    c.hidden = 16;
    c.seed = 7;
    TaskSourceSpec s;
    s.input_dim = 8;
    s.classes_per_alphabet = 8;
    s.train_alphabets = {0, 1, 2, 3, 4, 5, 6, 7};
    const TaskSource src = load_task_source(s, c.seed);
    const WarpSet learned = prepare_warps(c, src);
    double sq = 0.0;
    for (const auto& P : learned) sq += offdiag_norm(P) * offdiag_norm(P);
    norms.push_back(std::sqrt(sq));
    detail += " " + format_double(norms.back());
  }
  const bool ok = norms[1] <= norms[0] && norms[2] <= norms[1];
  return {ok, detail};
}

Tensor explicit_kron(const Tensor& A, const Tensor& B) {
  const std::size_t a = A.rows(), b = B.rows();
  Tensor out({a * b, a * b});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < a; ++j)
      for (std::size_t k = 0; k < b; ++k)
        for (std::size_t l = 0; l < b; ++l) out.at(i * b + k, j * b + l) = A.at(i, j) * B.at(k, l);
  return out;
}

Verdict a7_kronecker() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor A = random_tensor({3, 3}, rng);
    const Tensor B = random_tensor({2, 2}, rng);
    const Tensor g = random_tensor({6}, rng);
    const Tensor k = warp_apply(WarpMatrix::kronecker(A, B), g);
    const Tensor d = warp_apply(WarpMatrix::dense(explicit_kron(A, B)), g);
    for (std::size_t i = 0; i < 6; ++i) worst = std::max(worst, std::abs(k[i] - d[i]));
  }
  return {worst <= kA7AbsTol, "100 random (A 3x3, B 2x2, g); max abs difference " + format_double(worst)};
}

Verdict a8_radam() {
  const double beta2 = 0.999;
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const auto closed_rho = [&](double t) { return rho_inf - 2.0 * t * std::pow(beta2, t) / (1.0 - std::pow(beta2, t)); };
  const Rectification first = radam_rectification(1, beta2);
  bool ok = std::abs(first.rho_inf - 1999.0) <= kA8Tol && std::abs(first.rho_t - 1.0) <= kA8Tol && !first.rectified &&
            std::abs(first.rho_t - closed_rho(1)) <= kA8Tol;
  HyperParams h;
  h.eta = 0.1;
  const StepResult r = baseline_step(OptimizerKind::RAdam, AdamState::fresh({1}), Tensor({1}, {1.0}),
                                     Tensor({1}, {4.0}), h);
  ok = ok && std::abs(r.w[0] - (1.0 - 0.1 * 4.0)) <= 1e-12;  // plain step on m_hat = g
  const std::uint64_t t = 200000;
  const Rectification late = radam_rectification(t, beta2);
  const double rt = closed_rho(static_cast<double>(t));
  const double r_closed =
      std::sqrt(((rt - 4) * (rt - 2) * rho_inf) / ((rho_inf - 4) * (rho_inf - 2) * rt));
  ok = ok && late.rectified && std::abs(late.rho_t - 1999.0) <= kA8Tol && std::abs(late.r_t - 1.0) <= kA8Tol &&
       std::abs(late.r_t - r_closed) <= kA8Tol;
  return {ok, "rho_1=" + format_double(first.rho_t) + " (unrectified), rho_t=" + format_double(late.rho_t) +
                  " r_t=" + format_double(late.r_t) + " at t=" + std::to_string(t)};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "warpadam");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "%s%s", out.str().c_str(), err.str().c_str());
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("warpadam_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> compare_args(const fs::path& out) {
  std::vector<std::string> a{"compare", "--out", out.string()};
  for (const char* s :
       {"compare.algorithms=SGD:sgd,Momentum:momentum,RAdam:radam,AdamW:adamw,WarpedAdam:warpadam",
        "compare.sources=synthetic_a,synthetic_b", "algo.SGD.optim.eta=0.05", "algo.Momentum.optim.eta=0.01",
        "algo.WarpedAdam.meta.enabled=true", "meta.outer_steps=20", "optim.eta=0.003", "model.hidden=32",
        "run.n_tasks=10", "run.steps_per_task=30", "source.synthetic_a.train=0,1,2,3,4,5,6,7",
        "source.synthetic_b.train=0,1,2,3,4,5,6,7", "source.synthetic_b.noise_sigma=0.1", "source.synthetic_b.seed=11"}) {
    a.push_back("--set");
    a.push_back(s);
  }
  return a;
}

Verdict a9_table_shape() {
  const fs::path dir = scratch("compare");
  if (cli(compare_args(dir)) != 0) return {false, "compare command failed"};
  const auto lines = lines_of(slurp(dir / "comparison.csv"));
  const std::vector<std::string> names{"SGD", "Momentum", "RAdam", "AdamW", "WarpedAdam"};
  bool ok = lines.size() > 13 && lines[0] == kComparisonHeader;
  for (std::size_t block = 0; ok && block < 2; ++block) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string& row = lines[1 + block * 6 + i];
      ok = ok && row.rfind(names[i] + ",", 0) == 0 && std::count(row.begin(), row.end(), ',') == 3;
    }
    ok = ok && lines[6 + block * 6].empty();
  }
  bool footer_values = false, footer_caveat = false;
  for (std::size_t i = 13; i < lines.size(); ++i) {
    ok = ok && !lines[i].empty() && lines[i][0] == '#';
    footer_values = footer_values || (lines[i].find("79.6") != std::string::npos &&
                                      lines[i].find("78.3") != std::string::npos);
    footer_caveat = footer_caveat || lines[i].find("not asserted") != std::string::npos;
  }
  ok = ok && footer_values && footer_caveat;
  std::string rows;
  for (std::size_t i = 1; i < std::min<std::size_t>(lines.size(), 12); ++i) {
    if (!lines[i].empty()) rows += (rows.empty() ? "" : " | ") + lines[i];
  }
  return {ok, "two blocks x 5 algorithms, exact header, quoted reference footer; rows: " + rows};
}

// Drops one CSV column from every line (wall-clock fields).
std::string drop_column(const std::string& text, std::size_t col) {
  std::string out;
  for (const auto& line : lines_of(text)) {
    if (line.empty() || line[0] == '#') {
      out += line + "\n";
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    std::string kept;
    for (std::size_t i = 0; i < f.size(); ++i)
      if (i != col) kept += (kept.empty() ? "" : ",") + f[i];
    out += kept + "\n";
  }
  return out;
}

Verdict a10_determinism() {
  // Tiny PGM tree for the import command.
  const fs::path tree = scratch("tree");
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 2; ++i) {
        const fs::path f = tree / ("alpha" + std::to_string(a)) / ("char" + std::to_string(c)) /
                           (std::to_string(i) + ".pgm");
        fs::create_directories(f.parent_path());
        std::ofstream(f, std::ios::binary)
            << encode_pgm(GrayImage{3, 2, 255, {0, std::uint8_t(40 * a), std::uint8_t(90 * c), 255,
                                                std::uint8_t(10 * i), 7}});
      }

  const std::vector<std::string> small{"model.hidden=8", "run.n_tasks=3", "run.steps_per_task=10",
                                       "source.alphabets=4", "source.classes_per_alphabet=6", "source.input_dim=8"};
  const auto with = [&](std::vector<std::string> args, std::vector<std::string> sets) {
    for (const auto& s : sets) args.push_back("--set"), args.push_back(s);
    return args;
  };
  struct Case {
    std::string command;
    std::vector<std::string> sets;
    std::vector<std::string> files;
  };
  std::vector<std::string> run_sets = small;
  run_sets.push_back("optim.kind=radam");
  std::vector<std::string> meta_sets = small;
  meta_sets.insert(meta_sets.end(), {"source.train=0,1", "meta.outer_steps=5", "meta.held_out_episodes=3"});
  std::vector<std::string> cmp_sets = small;
  cmp_sets.push_back("compare.algorithms=A:adam,W:warpadam,M:momentum");
  const std::vector<Case> cases{
      {"run", run_sets, {"curve.csv", "manifest.txt"}},
      {"meta-train", meta_sets, {"warp.bin", "meta_curve.csv", "held_out.txt", "manifest.txt"}},
      {"compare", cmp_sets, {"comparison.csv", "manifest.txt"}},
      {"import", {"import.root=" + tree.string(), "import.image_side=4"}, {"table.bin", "manifest.txt"}},
      {"check", {"check.trials=5"}, {"check.txt", "manifest.txt"}},
  };
  std::string detail;
  bool ok = true;
  for (const auto& c : cases) {
    const fs::path a = scratch(c.command + "_a"), b = scratch(c.command + "_b");
    const int first = cli(with({c.command, "--out", a.string()}, c.sets));
    const int second = cli({c.command, "--config", (a / "manifest.txt").string(), "--out", b.string()});
    bool same = first == 0 && second == 0;
    for (const auto& f : c.files) {
      std::string x = slurp(a / f), y = slurp(b / f);
      if (f == "curve.csv") x = drop_column(x, 6), y = drop_column(y, 6);
      if (f == "comparison.csv") x = drop_column(x, 1), y = drop_column(y, 1);
      same = same && !x.empty() && x == y;
    }
    ok = ok && same;
    detail += (detail.empty() ? "" : ", ") + c.command + (same ? " identical" : " DIFFERS");
  }
  return {ok, "re-run from manifest: " + detail + " (wall-clock fields excluded)"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    double budget_s;
    Verdict (*fn)();
  };
  const Criterion criteria[] = {
      {"A1", "identity warp reduces to Adam bit-for-bit", kA1Seconds, a1_reduction},
      {"A2", "positive diagonal warp degenerates to Adam", kA2Seconds, a2_diagonal},
      {"A3", "autodiff gradients match finite differences", kA3Seconds, a3_gradients},
      {"A4", "hypergradients match finite differences", kA4Seconds, a4_hypergradients},
      {"A5", "meta-learned P beats identity on held-out tasks", kA5Seconds, a5_meta_learning},
      {"A6", "off-diagonal penalty shrinks learned P", kA6Seconds, a6_tod_sweep},
      {"A7", "Kronecker warp equals its dense expansion", kA7Seconds, a7_kronecker},
      {"A8", "RAdam rectification closed forms", kA8Seconds, a8_radam},
      {"A9", "comparison table shape", kA9Seconds, a9_table_shape},
      {"A10", "re-runs from a manifest are bit-identical", 0, a10_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_s == 0 || secs <= c.budget_s;
    const bool pass = v.pass && in_time;
    failures += pass ? 0 : 1;
    char timing[64];
    if (c.budget_s > 0) {
      std::snprintf(timing, sizeof timing, "%.2f s, budget %.0f s", secs, c.budget_s);
    } else {
      std::snprintf(timing, sizeof timing, "%.2f s", secs);
    }
    std::printf("%s %-4s %s: %s [%s]%s\n", pass ? "PASS" : "FAIL", c.id, c.title, v.detail.c_str(), timing,
                in_time ? "" : " over time budget");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
