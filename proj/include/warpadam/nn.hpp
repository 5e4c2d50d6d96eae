#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "warpadam/graph.hpp"
#include "warpadam/tensor.hpp"

namespace warpadam {

enum class Activation { Tanh, Relu };

// Fully connected network: layers = {input, hidden..., output}. Parameters are
// laid out as W0 [in x h], b0 [1 x h], W1, b1, ...
struct MlpSpec {
  std::vector<std::size_t> layers;
  Activation activation = Activation::Tanh;

  std::size_t parameter_count() const;
  std::vector<Shape> parameter_shapes() const;
};

// Glorot-uniform weights, zero biases.
std::vector<Tensor> init_mlp(const MlpSpec& spec, std::mt19937_64& rng);

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, const Var& x);

// A labelled batch. Classification uses labels; regression uses targets.
struct Batch {
  Tensor x;
  std::vector<int> labels;
  Tensor targets;
};

// Support/query pair as seen by the meta-learner.
struct Task {
  Batch support;
  Batch query;
};

using LossFn = std::function<Var(std::span<const Var> params, const Batch& batch)>;

// Anything whose parameters can be adapted by inner optimisation steps.
struct Learner {
  std::vector<Tensor> init;
  LossFn loss;
};

Learner mlp_classifier(const MlpSpec& spec, std::vector<Tensor> init);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

LossAndGrad loss_and_grad(const LossFn& loss, std::span<const Tensor> params, const Batch& batch);
double evaluate_loss(const LossFn& loss, std::span<const Tensor> params, const Batch& batch);

// Fraction of rows whose arg-max matches the label.
double accuracy(const Tensor& logits, std::span<const int> labels);

}  // namespace warpadam
