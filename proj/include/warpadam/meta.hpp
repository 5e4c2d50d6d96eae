#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "warpadam/nn.hpp"
#include "warpadam/optim.hpp"
#include "warpadam/warp_matrix.hpp"

namespace warpadam {

struct MetaConfig {
  std::size_t inner_steps = 5;  // K
  HyperParams inner_hyper;
  double outer_eta = 1e-3;
  double tod_lambda = 1e-3;
  // Treat inner moment states as constants and keep only the final step's
  // direct dependence on P.
  bool first_order = false;
  std::size_t tasks_per_outer_step = 4;
  WarpPlacement placement = WarpPlacement::Gradient;
  // Upper bound on the unrolled graph; exceeding it is a ResourceError.
  std::size_t max_graph_nodes = 1'000'000;
  // Evaluate the hypergradients of a task batch concurrently.
  bool parallel_tasks = true;

  void validate() const;
};

// dL_query/dP per warp matrix, in WarpMatrix::entries() layout.
struct Hypergradient {
  std::vector<std::vector<double>> grads;
  double query_loss = 0.0;
};

// Runs K inner WarpAdam steps from learner.init on the support set and
// differentiates the query loss with respect to every warp matrix.
Hypergradient hypergrad_P(const Task& task, const Learner& learner, const WarpSet& warps,
                          const MetaConfig& cfg);

// Same inner loop with plain tensors; returns the post-adaptation query loss.
double adapted_query_loss(const Task& task, const Learner& learner, const WarpSet& warps,
                          const MetaConfig& cfg);

// Outer Adam state, one per warp matrix over its entries.
struct MetaState {
  std::vector<AdamState> outer;

  static MetaState fresh(const WarpSet& warps);
};

struct MetaStepResult {
  WarpSet warps;
  MetaState state;
  double mean_query_loss = 0.0;
  double penalty = 0.0;
};

// One outer step: mean hypergradient over the batch (reduced in batch order)
// plus the off-diagonal penalty gradient, then an Adam step on P's entries.
MetaStepResult meta_update_P(const WarpSet& warps, std::span<const Task> batch, const Learner& learner,
                             const MetaConfig& cfg, const MetaState& state);

struct MetaCurvePoint {
  std::size_t outer_step = 0;
  double query_loss = 0.0;
  double penalty = 0.0;
};

struct MetaTrainResult {
  WarpSet warps;
  std::vector<MetaCurvePoint> curve;
  bool diverged = false;
  std::string report;
};

// Called once per outer step with the step index; returns that step's task batch.
using TaskBatchSampler = std::function<std::vector<Task>(std::size_t outer_step)>;

MetaTrainResult meta_train(const Learner& learner, WarpSet init, const TaskBatchSampler& sampler,
                           std::size_t outer_steps, const MetaConfig& cfg);

}  // namespace warpadam
