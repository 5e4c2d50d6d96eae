#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "warpadam/graph.hpp"
#include "warpadam/tensor.hpp"
#include "warpadam/warp_matrix.hpp"

namespace warpadam {

struct HyperParams {
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // AdamW
  double momentum = 0.9;      // Momentum

  // Throws ContractError on eta <= 0, betas/momentum outside [0, 1), or negative
  // epsilon/weight_decay.
  void validate() const;
};

// Per-parameter-tensor optimizer state. Momentum keeps its velocity in m;
// AMSGrad keeps the running max of v_hat in v_max.
struct AdamState {
  Tensor m;
  Tensor v;
  Tensor v_max;
  std::uint64_t t = 0;

  static AdamState fresh(const Shape& shape);
};

struct StepResult {
  AdamState state;
  Tensor w;
};

enum class OptimizerKind { Sgd, Momentum, Adam, AmsGrad, AdamW, RAdam, WarpAdam };

const char* to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

// Where P enters the update. Gradient (the default) warps the raw gradient
// before both moment accumulators; Update accumulates raw gradients and
// warps the final step vector instead.
enum class WarpPlacement { Gradient, Update };

struct BiasCorrected {
  Tensor m_hat;
  Tensor v_hat;
};

BiasCorrected bias_correct(const Tensor& m, const Tensor& v, std::uint64_t t, double beta1, double beta2);

// w' = w - (eta / sqrt(v_hat + eps)) * m_hat. Epsilon sits under the root.
StepResult adam_step(const AdamState& state, const Tensor& w, const Tensor& g, const HyperParams& h);

// adam_step on P g in place of g.
StepResult warpadam_step(const AdamState& state, const Tensor& w, const Tensor& g, const WarpMatrix& P,
                         const HyperParams& h, WarpPlacement placement = WarpPlacement::Gradient);

// SGD, Momentum, AMSGrad, AdamW or RAdam (Adam also accepted). WarpAdam is
// rejected here since it needs a warp matrix.
StepResult baseline_step(OptimizerKind kind, const AdamState& state, const Tensor& w, const Tensor& g,
                         const HyperParams& h);

struct Rectification {
  double rho_inf = 0.0;
  double rho_t = 0.0;
  bool rectified = false;  // rho_t > 4
  double r_t = 0.0;        // only meaningful when rectified
};

Rectification radam_rectification(std::uint64_t t, double beta2);

// Differentiable WarpAdam step for unrolled inner loops.
struct AdamVarState {
  Var m;
  Var v;
  std::uint64_t t = 0;
};

struct VarStep {
  AdamVarState state;
  Var w;
};

AdamVarState fresh_var_state(Graph& graph, const Shape& shape);
VarStep warpadam_step(const AdamVarState& state, const Var& w, const Var& g, const WarpVar& P,
                      const HyperParams& h, WarpPlacement placement = WarpPlacement::Gradient);

// Steps a list of parameter tensors with one method, holding per-tensor state.
class ParameterOptimizer {
 public:
  ParameterOptimizer(OptimizerKind kind, HyperParams hyper, std::vector<Shape> shapes,
                     WarpSet warps = {}, WarpPlacement placement = WarpPlacement::Gradient);

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  OptimizerKind kind() const { return kind_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  OptimizerKind kind_;
  HyperParams hyper_;
  WarpSet warps_;
  WarpPlacement placement_;
  std::vector<AdamState> states_;
};

}  // namespace warpadam
