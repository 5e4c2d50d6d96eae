#include "warpadam/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "warpadam/graph.hpp"
#include "warpadam/meta.hpp"
#include "warpadam/nn.hpp"
#include "warpadam/optim.hpp"
#include "warpadam/tasks.hpp"
#include "warpadam/warp_matrix.hpp"

namespace warpadam {

namespace {

constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-5;
constexpr double kHyperStep = 1e-6;
constexpr double kHyperTol = 1e-4;

struct Range {
  double lo = -1.0;
  double hi = 1.0;
  double min_abs = 0.0;  // keep samples away from a kink at zero
};

using MultiFn = std::function<Var(std::span<const Var>)>;

struct PrimitiveCase {
  std::string name;
  std::vector<Shape> shapes;
  std::vector<Range> ranges;
  MultiFn fn;
};

Tensor sample(const Shape& shape, const Range& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(r.lo, r.hi);
  Tensor t(shape);
  for (double& x : t.data()) {
    x = dist(rng);
    if (std::abs(x) < r.min_abs) x = x < 0.0 ? -r.min_abs : r.min_abs;
  }
  return t;
}

// Weighted sum of the case's output so the upstream gradient is generic.
double eval_weighted(const PrimitiveCase& c, std::span<const Tensor> inputs, const Tensor& weights) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  const Var out = c.fn(vars);
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.value()[i] * weights[i];
  return s;
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<double> all;
  for (const auto& p : parts) all.insert(all.end(), p.data().begin(), p.data().end());
  const std::size_t n = all.size();
  return Tensor({n}, std::move(all));
}

std::vector<Tensor> split(const Tensor& flat, std::span<const Tensor> like) {
  std::vector<Tensor> out;
  std::size_t off = 0;
  for (const auto& l : like) {
    Tensor t(l.shape());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = flat[off + i];
    off += t.size();
    out.push_back(std::move(t));
  }
  return out;
}

CheckResult check_primitive(const PrimitiveCase& c, std::size_t trials, std::mt19937_64& rng) {
  CheckResult res{"grad:" + c.name, trials, 0.0, kGradTol, false};
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < c.shapes.size(); ++i) inputs.push_back(sample(c.shapes[i], c.ranges[i], rng));

    Graph g;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(g.leaf(in));
    const Var out = c.fn(vars);
    const Tensor weights = sample(out.shape(), Range{}, rng);
    const Var loss = sum(mul(out, g.constant(weights)));
    const auto grads = g.grad(loss, vars);
    std::vector<Tensor> analytic;
    for (const auto& gr : grads) analytic.push_back(gr.value());

    const Tensor flat = concat(inputs);
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& x) { return eval_weighted(c, split(x, inputs), weights); }, flat, kGradStep);
    res.max_error = std::max(res.max_error, relative_error(concat(analytic), numeric));
  }
  res.passed = res.max_error < res.tolerance;
  return res;
}

// tanh whose recorded rule is off by a factor of two.
Var corrupted_tanh(const Var& x) {
  Tensor value = Tensor::zeros_like(x.value());
  for (std::size_t i = 0; i < value.size(); ++i) value[i] = std::tanh(x.value()[i]);
  return x.graph().record({x}, std::move(value), [](const Var& u, std::span<const Var>, const Var& y) {
    return std::vector<Var>{scale(mul(u, add_scalar(neg(square(y)), 1.0)), 2.0)};
  });
}

std::vector<PrimitiveCase> primitive_cases(const std::string& corrupt) {
  const Range any{};
  const Range positive{0.5, 2.0, 0.0};
  const Range away{-1.0, 1.0, 1e-2};
  const Shape m34{3, 4};
  std::vector<int> labels{0, 3, 1};
  const bool bad_tanh = corrupt == "tanh";
  return {
      {"matmul", {{3, 4}, {4, 2}}, {any, any}, [](auto v) { return matmul(v[0], v[1]); }},
      {"add", {m34, m34}, {any, any}, [](auto v) { return add(v[0], v[1]); }},
      {"sub", {m34, m34}, {any, any}, [](auto v) { return sub(v[0], v[1]); }},
      {"mul", {m34, m34}, {any, any}, [](auto v) { return mul(v[0], v[1]); }},
      {"div", {m34, m34}, {any, positive}, [](auto v) { return div(v[0], v[1]); }},
      {"safe_div", {m34, m34}, {any, positive}, [](auto v) { return safe_div(v[0], v[1]); }},
      {"scale", {m34}, {any}, [](auto v) { return scale(v[0], -1.7); }},
      {"add_scalar", {m34}, {any}, [](auto v) { return add_scalar(v[0], 0.3); }},
      {"transpose", {m34}, {any}, [](auto v) { return transpose(v[0]); }},
      {"reshape", {m34}, {any}, [](auto v) { return reshape(v[0], {2, 6}); }},
      {"tanh", {m34}, {any}, [bad_tanh](auto v) { return bad_tanh ? corrupted_tanh(v[0]) : tanh(v[0]); }},
      {"relu", {m34}, {away}, [](auto v) { return relu(v[0]); }},
      {"exp", {m34}, {any}, [](auto v) { return exp(v[0]); }},
      {"log", {m34}, {positive}, [](auto v) { return log(v[0]); }},
      {"sqrt", {m34}, {positive}, [](auto v) { return sqrt(v[0]); }},
      {"square", {m34}, {any}, [](auto v) { return square(v[0]); }},
      {"sum", {m34}, {any}, [](auto v) { return sum(v[0]); }},
      {"mean", {m34}, {any}, [](auto v) { return mean(v[0]); }},
      {"expand", {{1, 1}}, {any}, [](auto v) { return expand(v[0], {2, 3}); }},
      {"sum_rows", {m34}, {any}, [](auto v) { return sum_rows(v[0]); }},
      {"repeat_rows", {{1, 4}}, {any}, [](auto v) { return repeat_rows(v[0], 3); }},
      {"sum_cols", {m34}, {any}, [](auto v) { return sum_cols(v[0]); }},
      {"repeat_cols", {{3, 1}}, {any}, [](auto v) { return repeat_cols(v[0], 4); }},
      {"add_row", {m34, {1, 4}}, {any, any}, [](auto v) { return add_row(v[0], v[1]); }},
      {"softmax_cross_entropy", {m34}, {any},
       [labels](auto v) { return softmax_cross_entropy(v[0], labels); }},
      {"mse", {m34, m34}, {any, any}, [](auto v) { return mse(v[0], v[1]); }},
  };
}

struct SmallProblem {
  MlpSpec spec;
  Batch batch;
};

SmallProblem small_mlp(std::mt19937_64& rng) {
  SmallProblem p{MlpSpec{{4, 5, 3}, Activation::Tanh}, {}};
  p.batch.x = sample({6, 4}, Range{}, rng);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int i = 0; i < 6; ++i) p.batch.labels.push_back(lab(rng));
  return p;
}

std::vector<Tensor> perturbed_init(const MlpSpec& spec, std::mt19937_64& rng) {
  auto params = init_mlp(spec, rng);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (auto& p : params)
    for (double& x : p.data()) x += dist(rng);
  return params;
}

CheckResult check_mlp_gradient(std::size_t trials, std::mt19937_64& rng) {
  CheckResult res{"grad:mlp_cross_entropy", trials, 0.0, kGradTol, false};
  for (std::size_t t = 0; t < trials; ++t) {
    const SmallProblem p = small_mlp(rng);
    const Learner learner = mlp_classifier(p.spec, perturbed_init(p.spec, rng));
    const LossAndGrad lg = loss_and_grad(learner.loss, learner.init, p.batch);
    const Tensor flat = concat(learner.init);
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& x) { return evaluate_loss(learner.loss, split(x, learner.init), p.batch); }, flat,
        kGradStep);
    res.max_error = std::max(res.max_error, relative_error(concat(lg.grads), numeric));
  }
  res.passed = res.max_error < res.tolerance;
  return res;
}

// d/dw [v . grad L(w)] through a create_graph backward, against differences
// of the first-order gradient.
CheckResult check_hessian_vector(std::size_t trials, std::mt19937_64& rng) {
  CheckResult res{"grad:hessian_vector_product", trials, 0.0, kGradTol, false};
  for (std::size_t t = 0; t < trials; ++t) {
    const SmallProblem p = small_mlp(rng);
    const Learner learner = mlp_classifier(p.spec, perturbed_init(p.spec, rng));
    std::vector<Tensor> dirs;
    for (const auto& w : learner.init) dirs.push_back(sample(w.shape(), Range{}, rng));

    Graph g;
    std::vector<Var> w;
    for (const auto& x : learner.init) w.push_back(g.leaf(x));
    const auto grads = g.grad(learner.loss(w, p.batch), w, true);
    Var s = g.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < grads.size(); ++i) s = add(s, sum(mul(grads[i], g.constant(dirs[i]))));
    std::vector<Tensor> analytic;
    for (const auto& h : g.grad(s, w)) analytic.push_back(h.value());

    const auto directional = [&](const Tensor& x) {
      const LossAndGrad lg = loss_and_grad(learner.loss, split(x, learner.init), p.batch);
      double d = 0.0;
      for (std::size_t i = 0; i < dirs.size(); ++i)
        for (std::size_t j = 0; j < dirs[i].size(); ++j) d += lg.grads[i][j] * dirs[i][j];
      return d;
    };
    const Tensor numeric = finite_diff_grad(directional, concat(learner.init), kGradStep);
    res.max_error = std::max(res.max_error, relative_error(concat(analytic), numeric));
  }
  res.passed = res.max_error < res.tolerance;
  return res;
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(const CheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<CheckResult> out;
  for (const auto& c : primitive_cases(options.corrupt_rule)) out.push_back(check_primitive(c, options.trials, rng));
  out.push_back(check_mlp_gradient(options.trials, rng));
  out.push_back(check_hessian_vector(options.trials, rng));
  return out;
}

namespace {

// 2-way episode on a 4-dimensional synthetic family and a 4-4-2 tanh MLP
// (30 parameters), every warp Dense.
struct HyperProblem {
  Task task;
  Learner learner;
  WarpSet warps;
};

HyperProblem hyper_problem(std::mt19937_64& rng) {
  const ClassTable table = synth_proto_tasks(2, 2, 8, 4, 0.3, rng);
  const Episode ep = sample_episode(table, EpisodeGeometry{2, 2, 3}, rng);
  const MlpSpec spec{{4, 4, 2}, Activation::Tanh};
  HyperProblem p{to_task(ep), mlp_classifier(spec, init_mlp(spec, rng)), {}};
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (const auto& s : spec.parameter_shapes()) {
    Tensor m = Tensor::identity(shape_size(s));
    for (double& x : m.data()) x += jitter(rng);
    p.warps.push_back(WarpMatrix::dense(m));
  }
  return p;
}

std::vector<double> all_entries(const WarpSet& warps) {
  std::vector<double> out;
  for (const auto& P : warps) out.insert(out.end(), P.entries().begin(), P.entries().end());
  return out;
}

WarpSet with_all_entries(const WarpSet& like, const Tensor& flat) {
  WarpSet out;
  std::size_t off = 0;
  for (const auto& P : like) {
    const std::size_t n = P.entries().size();
    out.push_back(P.with_entries(std::vector<double>(flat.data().begin() + static_cast<std::ptrdiff_t>(off),
                                                     flat.data().begin() + static_cast<std::ptrdiff_t>(off + n))));
    off += n;
  }
  return out;
}

CheckResult check_hypergradient(std::size_t inner_steps, std::size_t trials, std::mt19937_64& rng) {
  CheckResult res{"hypergrad:dense_K" + std::to_string(inner_steps), trials, 0.0, kHyperTol, false};
  MetaConfig cfg;
  cfg.inner_steps = inner_steps;
  cfg.inner_hyper.eta = 0.05;
  for (std::size_t t = 0; t < trials; ++t) {
    const HyperProblem p = hyper_problem(rng);
    const Hypergradient hg = hypergrad_P(p.task, p.learner, p.warps, cfg);
    std::vector<double> analytic;
    for (const auto& g : hg.grads) analytic.insert(analytic.end(), g.begin(), g.end());
    const std::vector<double> flat = all_entries(p.warps);
    const Tensor x({flat.size()}, flat);
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& e) { return adapted_query_loss(p.task, p.learner, with_all_entries(p.warps, e), cfg); }, x,
        kHyperStep);
    res.max_error = std::max(res.max_error, relative_error(Tensor({analytic.size()}, analytic), numeric));
  }
  res.passed = res.max_error < res.tolerance;
  return res;
}

CheckResult check_kronecker(std::size_t trials, std::mt19937_64& rng) {
  CheckResult res{"warp:kronecker_equals_dense(abs)", trials, 0.0, 1e-12, false};
  for (std::size_t t = 0; t < trials; ++t) {
    const Tensor A = sample({3, 3}, Range{}, rng);
    const Tensor B = sample({2, 2}, Range{}, rng);
    const Tensor g = sample({6}, Range{}, rng);
    const WarpMatrix kron = WarpMatrix::kronecker(A, B);
    const WarpMatrix dense = WarpMatrix::dense(kron.materialize());
    const Tensor a = warp_apply(kron, g);
    const Tensor b = warp_apply(dense, g);
    for (std::size_t i = 0; i < a.size(); ++i) res.max_error = std::max(res.max_error, std::abs(a[i] - b[i]));
  }
  res.passed = res.max_error <= res.tolerance;
  return res;
}

CheckResult check_identity_reduction(std::size_t trials, std::mt19937_64& rng) {
  CheckResult res{"warp:identity_reduction(bitwise mismatches)", trials, 0.0, 0.0, false};
  HyperParams h;
  for (std::size_t t = 0; t < trials; ++t) {
    AdamState sa = AdamState::fresh({2, 3});
    AdamState sw = sa;
    Tensor wa = sample({2, 3}, Range{}, rng);
    Tensor ww = wa;
    const WarpMatrix I = WarpMatrix::identity(6);
    for (int step = 0; step < 10; ++step) {
      const Tensor g = sample({2, 3}, Range{}, rng);
      StepResult ra = adam_step(sa, wa, g, h);
      StepResult rw = warpadam_step(sw, ww, g, I, h);
      sa = std::move(ra.state);
      wa = std::move(ra.w);
      sw = std::move(rw.state);
      ww = std::move(rw.w);
    }
    if (!(wa == ww && sa.m == sw.m && sa.v == sw.v)) res.max_error += 1.0;
  }
  res.passed = res.max_error == 0.0;
  return res;
}

}  // namespace

std::vector<CheckResult> run_warp_checks(const CheckOptions& options) {
  std::mt19937_64 rng(options.seed + 1);
  std::vector<CheckResult> out;
  const std::size_t hyper_trials = std::max<std::size_t>(1, options.trials / 20);
  out.push_back(check_hypergradient(3, hyper_trials, rng));
  out.push_back(check_hypergradient(5, hyper_trials, rng));
  out.push_back(check_kronecker(options.trials, rng));
  out.push_back(check_identity_reduction(options.trials, rng));
  return out;
}

}  // namespace warpadam
