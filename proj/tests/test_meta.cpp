#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "warpadam/error.hpp"
#include "warpadam/meta.hpp"
#include "warpadam/tasks.hpp"

using namespace warpadam;

namespace {

// L(w) = |w - target|^2 / 2 with the target carried in batch.targets.
Learner quadratic(Tensor init) {
  return Learner{{std::move(init)}, [](std::span<const Var> p, const Batch& b) {
                   Graph& g = p[0].graph();
                   return scale(sum(square(sub(p[0], g.constant(b.targets)))), 0.5);
                 }};
}

Task quad_task(std::vector<double> support, std::vector<double> query) {
  Task t;
  const std::size_t n = support.size();
  t.support.targets = Tensor({n}, std::move(support));
  t.query.targets = Tensor({n}, std::move(query));
  return t;
}

double finite_diff_scalar_p(const Task& task, const Learner& l, const WarpSet& P, const MetaConfig& cfg, double h) {
  const Tensor flat({P[0].entries().size()}, std::vector<double>(P[0].entries().begin(), P[0].entries().end()));
  return finite_diff_grad(
      [&](const Tensor& e) { return adapted_query_loss(task, l, {P[0].with_entries(e.values())}, cfg); }, flat,
      h)[0];
}

}  // namespace

TEST(Hypergrad, ZeroWhenSupportGradientVanishes) {
  const Learner l = quadratic(Tensor({2}, {0.5, -0.5}));
  const Task task = quad_task({0.5, -0.5}, {1.0, 2.0});
  MetaConfig cfg;
  cfg.inner_steps = 3;
  const Hypergradient hg = hypergrad_P(task, l, {WarpMatrix::dense(Tensor::matrix(2, 2, {1, 0.3, -0.2, 1}))}, cfg);
  for (double x : hg.grads[0]) EXPECT_EQ(x, 0.0);
}

TEST(Hypergrad, SignStepHasFlatRegion) {
  // One step from a fresh state with eps = 0 is w - eta * sign(p (w - a)).
  const Learner l = quadratic(Tensor({1}, {2.0}));
  const Task task = quad_task({0.5}, {1.0});
  MetaConfig cfg;
  cfg.inner_steps = 1;
  cfg.inner_hyper.eta = 0.1;
  cfg.inner_hyper.epsilon = 0.0;
  for (double p : {0.3, 1.0, 4.0, -2.0}) {
    const WarpSet P{WarpMatrix::dense(Tensor::matrix(1, 1, {p}))};
    const Hypergradient hg = hypergrad_P(task, l, P, cfg);
    EXPECT_NEAR(hg.grads[0][0], 0.0, 1e-12) << p;
    EXPECT_NEAR(finite_diff_scalar_p(task, l, P, cfg, 1e-4), 0.0, 1e-12) << p;
  }
}

TEST(Hypergrad, TwoParameterModelMatchesFiniteDifferences) {
  const Learner l = quadratic(Tensor({2}, {0.2, -0.4}));
  const Task task = quad_task({1.0, 0.3}, {0.8, 0.5});
  MetaConfig cfg;
  cfg.inner_steps = 3;
  cfg.inner_hyper.eta = 0.1;
  const WarpSet P{WarpMatrix::dense(Tensor::matrix(2, 2, {1.0, 0.4, -0.3, 0.8}))};
  const Hypergradient hg = hypergrad_P(task, l, P, cfg);
  const std::vector<double> e(P[0].entries().begin(), P[0].entries().end());
  const Tensor numeric = finite_diff_grad(
      [&](const Tensor& x) { return adapted_query_loss(task, l, {P[0].with_entries(x.values())}, cfg); },
      Tensor({4}, e), 1e-6);
  EXPECT_LT(relative_error(Tensor({4}, hg.grads[0]), numeric), 1e-4);
  EXPECT_DOUBLE_EQ(hg.query_loss, adapted_query_loss(task, l, P, cfg));
}

TEST(Hypergrad, MlpEveryFormMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const ClassTable table = synth_proto_tasks(1, 3, 6, 4, 0.3, rng);
  const Task task = to_task(sample_episode(table, EpisodeGeometry{3, 2, 2}, rng));
  const MlpSpec spec{{4, 3, 3}, Activation::Tanh};
  const Learner l = mlp_classifier(spec, init_mlp(spec, rng));
  MetaConfig cfg;
  cfg.inner_steps = 2;
  cfg.inner_hyper.eta = 0.05;
  WarpSet P{WarpMatrix::kronecker(Tensor::matrix(4, 4, {1, .1, 0, 0, 0, 1, .2, 0, 0, 0, 1, -.1, .1, 0, 0, 1}),
                                  Tensor::matrix(3, 3, {1, 0, .2, 0, .9, 0, -.1, 0, 1.1})),
            WarpMatrix::diagonal({1.0, 0.7, 1.3}),
            WarpMatrix::identity_as(WarpForm::Dense, 9),
            WarpMatrix::identity(3)};
  const Hypergradient hg = hypergrad_P(task, l, P, cfg);
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P[k].entries().empty()) {
      EXPECT_TRUE(hg.grads[k].empty());
      continue;
    }
    const std::vector<double> e(P[k].entries().begin(), P[k].entries().end());
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& x) {
          WarpSet Q = P;
          Q[k] = P[k].with_entries(x.values());
          return adapted_query_loss(task, l, Q, cfg);
        },
        Tensor({e.size()}, e), 1e-5);
    // The diagonal's hypergradient is ~1e-7, where FD roundoff dominates; hence the absolute floor.
    const Tensor analytic({hg.grads[k].size()}, hg.grads[k]);
    Tensor diff = analytic;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= numeric[i];
    EXPECT_LE(norm(diff), 1e-4 * norm(numeric) + 1e-9) << "warp " << k;
  }
}

TEST(Hypergrad, FirstOrderEqualsFullForOneStep) {
  const Learner l = quadratic(Tensor({2}, {0.2, -0.4}));
  const Task task = quad_task({1.0, 0.3}, {0.8, 0.5});
  MetaConfig cfg;
  cfg.inner_steps = 1;
  const WarpSet P{WarpMatrix::dense(Tensor::matrix(2, 2, {1.0, 0.4, -0.3, 0.8}))};
  const auto full = hypergrad_P(task, l, P, cfg);
  cfg.first_order = true;
  const auto first = hypergrad_P(task, l, P, cfg);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(full.grads[0][i], first.grads[0][i], 1e-15);
}

TEST(Hypergrad, GraphBudgetIsResourceError) {
  const Learner l = quadratic(Tensor({2}, {0.2, -0.4}));
  const Task task = quad_task({1.0, 0.3}, {0.8, 0.5});
  MetaConfig cfg;
  cfg.inner_steps = 5;
  cfg.max_graph_nodes = 20;
  EXPECT_THROW(hypergrad_P(task, l, {WarpMatrix::identity_as(WarpForm::Dense, 2)}, cfg), ResourceError);
}

TEST(MetaUpdate, ZeroHypergradientIsFixedPoint) {
  const Learner l = quadratic(Tensor({2}, {0.5, -0.5}));
  const std::vector<Task> batch{quad_task({0.5, -0.5}, {1.0, 2.0}), quad_task({0.5, -0.5}, {0.0, 0.0})};
  MetaConfig cfg;
  cfg.tod_lambda = 0.0;
  const WarpSet P{WarpMatrix::dense(Tensor::matrix(2, 2, {1, 0.3, -0.2, 1}))};
  const auto r = meta_update_P(P, batch, l, cfg, MetaState::fresh(P));
  EXPECT_EQ(r.warps, P);
}

TEST(MetaUpdate, PreservesFormAndDimensions) {
  std::mt19937_64 rng(5);
  const ClassTable table = synth_proto_tasks(1, 3, 6, 6, 0.3, rng);
  std::vector<Task> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(to_task(sample_episode(table, EpisodeGeometry{3, 1, 2}, rng)));
  const MlpSpec spec{{6, 4, 3}, Activation::Tanh};
  const Learner l = mlp_classifier(spec, init_mlp(spec, rng));
  const auto shapes = spec.parameter_shapes();
  const WarpSet P{WarpMatrix::identity_as(WarpForm::Kronecker, 24, 6, 4), WarpMatrix::identity_as(WarpForm::Diagonal, 4),
                  WarpMatrix::identity_as(WarpForm::Dense, 12), WarpMatrix::identity(3)};
  MetaConfig cfg;
  cfg.inner_steps = 2;
  cfg.outer_eta = 0.01;
  const auto r = meta_update_P(P, batch, l, cfg, MetaState::fresh(P));
  ASSERT_EQ(r.warps.size(), P.size());
  for (std::size_t i = 0; i < P.size(); ++i) {
    EXPECT_EQ(r.warps[i].form(), P[i].form());
    EXPECT_EQ(r.warps[i].dim(), P[i].dim());
    EXPECT_EQ(r.warps[i].factor_a(), P[i].factor_a());
    EXPECT_EQ(r.warps[i].entries().size(), P[i].entries().size());
  }
  EXPECT_NE(r.warps[0], P[0]);
  EXPECT_NE(r.warps[1], P[1]);
}

TEST(MetaUpdate, SerialAndParallelTaskBatchesAgree) {
  std::mt19937_64 rng(6);
  const ClassTable table = synth_proto_tasks(1, 3, 6, 4, 0.3, rng);
  std::vector<Task> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(to_task(sample_episode(table, EpisodeGeometry{3, 1, 2}, rng)));
  const MlpSpec spec{{4, 3, 3}, Activation::Tanh};
  const Learner l = mlp_classifier(spec, init_mlp(spec, rng));
  const WarpSet P = default_warps(spec.parameter_shapes());
  MetaConfig cfg;
  cfg.inner_steps = 2;
  const auto a = meta_update_P(P, batch, l, cfg, MetaState::fresh(P));
  cfg.parallel_tasks = false;
  const auto b = meta_update_P(P, batch, l, cfg, MetaState::fresh(P));
  EXPECT_EQ(a.warps, b.warps);
  EXPECT_EQ(a.mean_query_loss, b.mean_query_loss);
}

TEST(MetaUpdate, MatchesWholePipelineBruteForce) {
  // Every task's inner loop, the batch mean and the outer gradient are built
  // as one graph over a single scalar p, with the inner Adam written out here.
  const double w0 = 0.3;
  const std::vector<std::pair<double, double>> targets{{1.0, 0.7}, {-0.5, -0.2}, {0.4, 1.1}};
  MetaConfig cfg;
  cfg.inner_steps = 3;
  cfg.inner_hyper.eta = 0.2;
  cfg.outer_eta = 0.05;
  cfg.tod_lambda = 0.5;  // no off-diagonal entries in 1 x 1, so it must not matter
  const double p0 = 1.3;

  Graph g;
  const Var p = g.leaf(Tensor::scalar(p0));
  Var total = g.constant(Tensor::scalar(0.0));
  const HyperParams& h = cfg.inner_hyper;
  for (const auto& [a, b] : targets) {
    Var w = g.leaf(Tensor::scalar(w0));
    Var m = g.constant(Tensor::scalar(0.0));
    Var v = g.constant(Tensor::scalar(0.0));
    for (std::size_t t = 1; t <= cfg.inner_steps; ++t) {
      const Var loss = scale(square(sub(w, g.constant(Tensor::scalar(a)))), 0.5);
      const std::vector<Var> wrt{w};
      const Var grad = g.grad(loss, wrt, true)[0];
      const Var pg = mul(p, grad);
      m = add(scale(m, h.beta1), scale(pg, 1 - h.beta1));
      v = add(scale(v, h.beta2), scale(square(pg), 1 - h.beta2));
      const Var mh = scale(m, 1 / (1 - std::pow(h.beta1, t)));
      const Var vh = scale(v, 1 / (1 - std::pow(h.beta2, t)));
      w = sub(w, scale(div(mh, sqrt(add_scalar(vh, h.epsilon))), h.eta));
    }
    total = add(total, scale(square(sub(w, g.constant(Tensor::scalar(b)))), 0.5));
  }
  const Var mean_loss = scale(total, 1.0 / static_cast<double>(targets.size()));
  const std::vector<Var> wrt{p};
  const double dp = g.grad(mean_loss, wrt)[0].value().item();
  // First outer Adam step from a fresh state: m_hat = dp, v_hat = dp^2.
  const double expected = p0 - cfg.outer_eta * dp / std::sqrt(dp * dp + 1e-8);

  const Learner l = quadratic(Tensor({1}, {w0}));
  std::vector<Task> batch;
  for (const auto& [a, b] : targets) batch.push_back(quad_task({a}, {b}));
  const WarpSet P{WarpMatrix::dense(Tensor::matrix(1, 1, {p0}))};
  const auto r = meta_update_P(P, batch, l, cfg, MetaState::fresh(P));
  EXPECT_NEAR(r.warps[0].entries()[0], expected, 1e-12);
  EXPECT_NEAR(r.mean_query_loss, mean_loss.value().item(), 1e-14);
}

TEST(MetaTrain, ZeroOuterStepsKeepsIdentity) {
  const Learner l = quadratic(Tensor({2}, {0.5, -0.5}));
  const WarpSet init{WarpMatrix::identity_as(WarpForm::Dense, 2)};
  const auto r = meta_train(l, init, [](std::size_t) { return std::vector<Task>{}; }, 0, MetaConfig{});
  EXPECT_EQ(r.warps, init);
  EXPECT_TRUE(r.curve.empty());
  EXPECT_FALSE(r.diverged);
}

TEST(MetaTrain, DeterministicAndCurveLength) {
  const Learner l = quadratic(Tensor({2}, {0.5, -0.5}));
  const auto sampler = [](std::size_t step) {
    const double s = static_cast<double>(step);
    return std::vector<Task>{quad_task({1.0 + 0.1 * s, 0.2}, {0.9, 0.1 * s})};
  };
  MetaConfig cfg;
  cfg.outer_eta = 0.01;
  const WarpSet init{WarpMatrix::identity_as(WarpForm::Dense, 2)};
  const auto a = meta_train(l, init, sampler, 5, cfg);
  const auto b = meta_train(l, init, sampler, 5, cfg);
  EXPECT_EQ(a.warps, b.warps);
  EXPECT_EQ(a.curve.size(), 5u);
}

TEST(MetaConfig, Validation) {
  MetaConfig c;
  c.inner_steps = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = MetaConfig{};
  c.outer_eta = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = MetaConfig{};
  c.tod_lambda = -1.0;
  EXPECT_THROW(c.validate(), ContractError);
}
