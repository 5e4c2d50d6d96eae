#include "warpadam/meta.hpp"

#include <cmath>
#include <exception>

#include "warpadam/error.hpp"

namespace warpadam {

void MetaConfig::validate() const {
  if (inner_steps < 1) throw ContractError("meta config: inner_steps must be >= 1");
  if (!(outer_eta > 0.0)) throw ContractError("meta config: outer_eta must be positive");
  if (!(tod_lambda >= 0.0)) throw ContractError("meta config: tod_lambda must be non-negative");
  if (tasks_per_outer_step < 1) throw ContractError("meta config: tasks_per_outer_step must be >= 1");
  inner_hyper.validate();
}

namespace {

void check_warps(const Learner& learner, const WarpSet& warps) {
  if (warps.size() != learner.init.size()) {
    throw ContractError("need one warp matrix per parameter tensor (" + std::to_string(learner.init.size()) +
                        "), got " + std::to_string(warps.size()));
  }
  for (std::size_t i = 0; i < warps.size(); ++i) {
    if (warps[i].dim() != learner.init[i].size()) {
      throw ShapeError("warp " + std::to_string(i) + " has dimension " + std::to_string(warps[i].dim()) +
                       " but parameter has " + std::to_string(learner.init[i].size()) + " entries");
    }
  }
}

void check_task(const Task& task) {
  if (task.support.x.size() == 0 || task.query.x.size() == 0) {
    throw ContractError("task needs non-empty support and query sets");
  }
}

void check_budget(const Graph& g, const MetaConfig& cfg) {
  if (g.size() > cfg.max_graph_nodes) {
    throw ResourceError("unrolled inner loop exceeds the graph budget of " + std::to_string(cfg.max_graph_nodes) +
                        " nodes; lower inner_steps or enable first_order");
  }
}

// Numeric WarpAdam trajectory from learner.init; returns the parameters and
// optimizer states after `steps` steps.
std::pair<std::vector<Tensor>, std::vector<AdamState>> run_inner(const Task& task, const Learner& learner,
                                                                 const WarpSet& warps, const MetaConfig& cfg,
                                                                 std::size_t steps) {
  std::vector<Tensor> params = learner.init;
  std::vector<AdamState> states;
  for (const auto& p : params) states.push_back(AdamState::fresh(p.shape()));
  for (std::size_t k = 0; k < steps; ++k) {
    const LossAndGrad lg = loss_and_grad(learner.loss, params, task.support);
    for (std::size_t i = 0; i < params.size(); ++i) {
      StepResult r = warpadam_step(states[i], params[i], lg.grads[i], warps[i], cfg.inner_hyper, cfg.placement);
      states[i] = std::move(r.state);
      params[i] = std::move(r.w);
    }
  }
  return {std::move(params), std::move(states)};
}

}  // namespace

double adapted_query_loss(const Task& task, const Learner& learner, const WarpSet& warps,
                          const MetaConfig& cfg) {
  cfg.validate();
  check_warps(learner, warps);
  check_task(task);
  auto [params, states] = run_inner(task, learner, warps, cfg, cfg.inner_steps);
  return evaluate_loss(learner.loss, params, task.query);
}

Hypergradient hypergrad_P(const Task& task, const Learner& learner, const WarpSet& warps,
                          const MetaConfig& cfg) {
  cfg.validate();
  check_warps(learner, warps);
  check_task(task);

  Graph g;
  std::vector<WarpVar> pvars;
  std::vector<Var> pnodes;
  for (const auto& P : warps) {
    pvars.push_back(to_var(g, P, true));
    for (const auto& n : pvars.back().nodes) pnodes.push_back(n);
  }

  const std::size_t n = learner.init.size();
  std::vector<Var> w;
  std::vector<AdamVarState> states;
  std::size_t unrolled = cfg.inner_steps;

  if (cfg.first_order) {
    // Everything before the final step is a constant.
    auto [params, numeric_states] = run_inner(task, learner, warps, cfg, cfg.inner_steps - 1);
    for (std::size_t i = 0; i < n; ++i) {
      w.push_back(g.leaf(params[i]));
      states.push_back({g.constant(numeric_states[i].m), g.constant(numeric_states[i].v), numeric_states[i].t});
    }
    unrolled = 1;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      w.push_back(g.leaf(learner.init[i]));
      states.push_back(fresh_var_state(g, learner.init[i].shape()));
    }
  }

  for (std::size_t k = 0; k < unrolled; ++k) {
    const Var support_loss = learner.loss(w, task.support);
    const std::vector<Var> grads = g.grad(support_loss, w, !cfg.first_order);
    std::vector<Var> next;
    for (std::size_t i = 0; i < n; ++i) {
      VarStep s = warpadam_step(states[i], w[i], grads[i], pvars[i], cfg.inner_hyper, cfg.placement);
      states[i] = s.state;
      next.push_back(s.w);
    }
    w = std::move(next);
    check_budget(g, cfg);
  }

  const Var query_loss = learner.loss(w, task.query);
  Hypergradient out;
  out.query_loss = query_loss.value().item();
  const std::vector<Var> dP = g.grad(query_loss, pnodes, false);
  std::size_t cursor = 0;
  for (const auto& pv : pvars) {
    const std::span<const Var> mine(dP.data() + cursor, pv.nodes.size());
    out.grads.push_back(flatten_entries(mine));
    cursor += pv.nodes.size();
  }
  return out;
}

MetaState MetaState::fresh(const WarpSet& warps) {
  MetaState s;
  for (const auto& P : warps) {
    const std::size_t n = P.entries().size();
    s.outer.push_back(AdamState::fresh({n == 0 ? std::size_t{1} : n}));
  }
  return s;
}

MetaStepResult meta_update_P(const WarpSet& warps, std::span<const Task> batch, const Learner& learner,
                             const MetaConfig& cfg, const MetaState& state) {
  cfg.validate();
  if (batch.empty()) throw ContractError("meta_update_P needs a non-empty task batch");
  if (state.outer.size() != warps.size()) throw ContractError("meta state does not match the warp set");

  const auto count = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<Hypergradient> per_task(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
#pragma omp parallel for schedule(static) if (cfg.parallel_tasks && count > 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      per_task[static_cast<std::size_t>(i)] = hypergrad_P(batch[static_cast<std::size_t>(i)], learner, warps, cfg);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MetaStepResult out{warps, state, 0.0, 0.0};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& h : per_task) out.mean_query_loss += h.query_loss;
  out.mean_query_loss *= inv;

  HyperParams outer;
  outer.eta = cfg.outer_eta;
  for (std::size_t p = 0; p < warps.size(); ++p) {
    const WarpMatrix& P = warps[p];
    const std::size_t n = P.entries().size();
    out.penalty += tod_penalty(P, cfg.tod_lambda);
    if (n == 0) continue;
    Tensor grad({n});
    for (const auto& h : per_task) {
      for (std::size_t j = 0; j < n; ++j) grad[j] += h.grads[p][j];
    }
    const std::vector<double> tod = tod_penalty_grad(P, cfg.tod_lambda);
    for (std::size_t j = 0; j < n; ++j) grad[j] = grad[j] * inv + tod[j];
    const Tensor entries({n}, std::vector<double>(P.entries().begin(), P.entries().end()));
    StepResult r = adam_step(state.outer[p], entries, grad, outer);
    out.state.outer[p] = std::move(r.state);
    out.warps[p] = P.with_entries(r.w.values());
  }
  return out;
}

MetaTrainResult meta_train(const Learner& learner, WarpSet init, const TaskBatchSampler& sampler,
                           std::size_t outer_steps, const MetaConfig& cfg) {
  cfg.validate();
  check_warps(learner, init);
  MetaTrainResult out;
  out.warps = std::move(init);
  MetaState state = MetaState::fresh(out.warps);
  for (std::size_t step = 0; step < outer_steps; ++step) {
    const std::vector<Task> batch = sampler(step);
    MetaStepResult r;
    try {
      r = meta_update_P(out.warps, batch, learner, cfg, state);
    } catch (const NumericError& e) {
      out.diverged = true;
      out.report = "outer step " + std::to_string(step) + ": " + e.what();
      return out;
    }
    out.curve.push_back({step, r.mean_query_loss, r.penalty});
    bool finite = std::isfinite(r.mean_query_loss);
    for (const auto& P : r.warps) {
      for (double x : P.entries()) finite = finite && std::isfinite(x);
    }
    if (!finite) {
      out.diverged = true;
      out.report = "outer step " + std::to_string(step) + ": non-finite query loss or warp entries";
      return out;
    }
    out.warps = std::move(r.warps);
    state = std::move(r.state);
  }
  return out;
}

}  // namespace warpadam
