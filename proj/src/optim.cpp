#include "warpadam/optim.hpp"

#include <algorithm>
#include <cmath>

#include "warpadam/error.hpp"
#include "warpadam/kernels.hpp"

namespace warpadam {

void HyperParams::validate() const {
  if (!(eta > 0.0)) throw ContractError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ContractError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("beta2 must lie in [0, 1)");
  if (!(epsilon >= 0.0)) throw ContractError("epsilon must be non-negative");
  if (!(weight_decay >= 0.0)) throw ContractError("weight decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
}

AdamState AdamState::fresh(const Shape& shape) {
  return AdamState{Tensor(shape), Tensor(shape), Tensor(shape), 0};
}

const char* to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::AmsGrad: return "amsgrad";
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::RAdam: return "radam";
    case OptimizerKind::WarpAdam: return "warpadam";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto k : {OptimizerKind::Sgd, OptimizerKind::Momentum, OptimizerKind::Adam, OptimizerKind::AmsGrad,
                 OptimizerKind::AdamW, OptimizerKind::RAdam, OptimizerKind::WarpAdam}) {
    if (lower == to_string(k)) return k;
  }
  if (lower == "warpedadam") return OptimizerKind::WarpAdam;
  throw ContractError("unknown optimizer '" + std::string(name) + "'");
}

namespace {

void check_step_inputs(const AdamState& state, const Tensor& w, const Tensor& g, const HyperParams& h) {
  h.validate();
  require_same_shape(w, g, "optimizer step (parameter vs gradient)");
  require_same_shape(w, state.m, "optimizer step (parameter vs first moment)");
  require_same_shape(w, state.v, "optimizer step (parameter vs second moment)");
  if (!g.all_finite()) throw NumericError("optimizer step: non-finite gradient");
}

double bias(double beta, std::uint64_t t) { return 1.0 - std::pow(beta, static_cast<double>(t)); }

kernels::AdaptiveStep adaptive(const HyperParams& h, std::uint64_t t) {
  return {h.beta1, h.beta2, h.epsilon, h.eta, bias(h.beta1, t), bias(h.beta2, t)};
}

double ratio(double eta, double denom, double m_hat) {
  return denom == 0.0 ? 0.0 : (eta / denom) * m_hat;
}

// Moments updated in place; returns bias-corrected values via the callback.
template <class F>
void accumulate(AdamState& s, const Tensor& g, const HyperParams& h, F&& per_element) {
  const double b1 = bias(h.beta1, s.t);
  const double b2 = bias(h.beta2, s.t);
  for (std::size_t i = 0; i < g.size(); ++i) {
    s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g[i];
    s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * (g[i] * g[i]);
    per_element(i, s.m[i] / b1, s.v[i] / b2);
  }
}

}  // namespace

BiasCorrected bias_correct(const Tensor& m, const Tensor& v, std::uint64_t t, double beta1, double beta2) {
  if (t == 0) throw ContractError("bias_correct needs t >= 1");
  require_same_shape(m, v, "bias_correct");
  const double c1 = bias(beta1, t);
  const double c2 = bias(beta2, t);
  BiasCorrected out{Tensor::zeros_like(m), Tensor::zeros_like(v)};
  for (std::size_t i = 0; i < m.size(); ++i) {
    out.m_hat[i] = m[i] / c1;
    out.v_hat[i] = v[i] / c2;
  }
  return out;
}

StepResult adam_step(const AdamState& state, const Tensor& w, const Tensor& g, const HyperParams& h) {
  check_step_inputs(state, w, g, h);
  StepResult out{state, w};
  out.state.t += 1;
  kernels::adaptive_step(out.w.data(), out.state.m.data(), out.state.v.data(), g.data(),
                         adaptive(h, out.state.t));
  return out;
}

StepResult warpadam_step(const AdamState& state, const Tensor& w, const Tensor& g, const WarpMatrix& P,
                         const HyperParams& h, WarpPlacement placement) {
  if (P.dim() != g.size()) {
    throw ShapeError("warp of dimension " + std::to_string(P.dim()) + " does not fit gradient of shape " +
                     shape_string(g.shape()));
  }
  if (placement == WarpPlacement::Gradient) return adam_step(state, w, warp_apply(P, g), h);

  check_step_inputs(state, w, g, h);
  StepResult out{state, w};
  out.state.t += 1;
  Tensor step = Tensor::zeros_like(w);
  accumulate(out.state, g, h, [&](std::size_t i, double m_hat, double v_hat) {
    step[i] = ratio(h.eta, std::sqrt(v_hat + h.epsilon), m_hat);
  });
  const Tensor warped = warp_apply(P, step);
  for (std::size_t i = 0; i < w.size(); ++i) out.w[i] = w[i] - warped[i];
  return out;
}

Rectification radam_rectification(std::uint64_t t, double beta2) {
  if (t == 0) throw ContractError("radam_rectification needs t >= 1");
  Rectification r;
  r.rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double bt = std::pow(beta2, static_cast<double>(t));
  r.rho_t = r.rho_inf - 2.0 * static_cast<double>(t) * bt / (1.0 - bt);
  r.rectified = r.rho_t > 4.0;
  if (r.rectified) {
    r.r_t = std::sqrt(((r.rho_t - 4.0) * (r.rho_t - 2.0) * r.rho_inf) /
                      ((r.rho_inf - 4.0) * (r.rho_inf - 2.0) * r.rho_t));
  }
  return r;
}

StepResult baseline_step(OptimizerKind kind, const AdamState& state, const Tensor& w, const Tensor& g,
                         const HyperParams& h) {
  check_step_inputs(state, w, g, h);
  StepResult out{state, w};
  out.state.t += 1;
  switch (kind) {
    case OptimizerKind::Sgd:
      for (std::size_t i = 0; i < w.size(); ++i) out.w[i] = w[i] - h.eta * g[i];
      break;
    case OptimizerKind::Momentum:
      for (std::size_t i = 0; i < w.size(); ++i) {
        out.state.m[i] = h.momentum * state.m[i] + g[i];
        out.w[i] = w[i] - h.eta * out.state.m[i];
      }
      break;
    case OptimizerKind::Adam:
      return adam_step(state, w, g, h);
    case OptimizerKind::AmsGrad:
      accumulate(out.state, g, h, [&](std::size_t i, double m_hat, double v_hat) {
        out.state.v_max[i] = std::max(state.v_max[i], v_hat);
        out.w[i] = w[i] - ratio(h.eta, std::sqrt(out.state.v_max[i] + h.epsilon), m_hat);
      });
      break;
    case OptimizerKind::AdamW:
      accumulate(out.state, g, h, [&](std::size_t i, double m_hat, double v_hat) {
        out.w[i] = w[i] - ratio(h.eta, std::sqrt(v_hat + h.epsilon), m_hat) - h.eta * h.weight_decay * w[i];
      });
      break;
    case OptimizerKind::RAdam: {
      const Rectification rect = radam_rectification(out.state.t, h.beta2);
      accumulate(out.state, g, h, [&](std::size_t i, double m_hat, double v_hat) {
        if (rect.rectified) {
          out.w[i] = w[i] - rect.r_t * ratio(h.eta, std::sqrt(v_hat + h.epsilon), m_hat);
        } else {
          out.w[i] = w[i] - h.eta * m_hat;
        }
      });
      break;
    }
    case OptimizerKind::WarpAdam:
      throw ContractError("baseline_step: warpadam needs a warp matrix, use warpadam_step");
  }
  return out;
}

AdamVarState fresh_var_state(Graph& graph, const Shape& shape) {
  return AdamVarState{graph.constant(Tensor(shape)), graph.constant(Tensor(shape)), 0};
}

VarStep warpadam_step(const AdamVarState& state, const Var& w, const Var& g, const WarpVar& P,
                      const HyperParams& h, WarpPlacement placement) {
  h.validate();
  if (w.shape() != g.shape()) throw ShapeError("warpadam_step: parameter and gradient shapes differ");
  VarStep out;
  out.state.t = state.t + 1;
  const Var moment_input = placement == WarpPlacement::Gradient ? warp_apply(P, g) : g;
  out.state.m = add(scale(state.m, h.beta1), scale(moment_input, 1.0 - h.beta1));
  out.state.v = add(scale(state.v, h.beta2), scale(square(moment_input), 1.0 - h.beta2));
  const Var m_hat = scale(out.state.m, 1.0 / bias(h.beta1, out.state.t));
  const Var v_hat = scale(out.state.v, 1.0 / bias(h.beta2, out.state.t));
  Var step = scale(safe_div(m_hat, sqrt(add_scalar(v_hat, h.epsilon))), h.eta);
  if (placement == WarpPlacement::Update) step = warp_apply(P, step);
  out.w = sub(w, step);
  return out;
}

ParameterOptimizer::ParameterOptimizer(OptimizerKind kind, HyperParams hyper, std::vector<Shape> shapes,
                                       WarpSet warps, WarpPlacement placement)
    : kind_(kind), hyper_(hyper), warps_(std::move(warps)), placement_(placement) {
  hyper_.validate();
  if (kind_ == OptimizerKind::WarpAdam) {
    if (warps_.empty()) warps_ = identity_warps(shapes, WarpForm::Identity);
    if (warps_.size() != shapes.size()) {
      throw ContractError("warpadam needs one warp matrix per parameter tensor");
    }
  }
  for (const auto& s : shapes) states_.push_back(AdamState::fresh(s));
}

void ParameterOptimizer::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != states_.size() || grads.size() != states_.size()) {
    throw ContractError("optimizer step: parameter/gradient count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    StepResult r = kind_ == OptimizerKind::WarpAdam
                       ? warpadam_step(states_[i], params[i], grads[i], warps_[i], hyper_, placement_)
                       : baseline_step(kind_, states_[i], params[i], grads[i], hyper_);
    states_[i] = std::move(r.state);
    params[i] = std::move(r.w);
  }
}

}  // namespace warpadam
