#include "warpadam/nn.hpp"

#include <cmath>

#include "warpadam/error.hpp"

namespace warpadam {

std::vector<Shape> MlpSpec::parameter_shapes() const {
  if (layers.size() < 2) throw ContractError("an MLP needs at least input and output sizes");
  std::vector<Shape> shapes;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    shapes.push_back({layers[l], layers[l + 1]});
    shapes.push_back({1, layers[l + 1]});
  }
  return shapes;
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes()) n += shape_size(s);
  return n;
}

std::vector<Tensor> init_mlp(const MlpSpec& spec, std::mt19937_64& rng) {
  std::vector<Tensor> params;
  for (const auto& shape : spec.parameter_shapes()) params.emplace_back(shape);
  for (std::size_t l = 0; l + 1 < spec.layers.size(); ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(spec.layers[l] + spec.layers[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : params[2 * l].data()) w = dist(rng);
  }
  return params;
}

Var mlp_forward(const MlpSpec& spec, std::span<const Var> params, const Var& x) {
  const std::size_t n_layers = spec.layers.size() - 1;
  if (params.size() != 2 * n_layers) {
    throw ContractError("mlp_forward: expected " + std::to_string(2 * n_layers) +
                        " parameter tensors, got " + std::to_string(params.size()));
  }
  Var h = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = add_row(matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < n_layers) h = spec.activation == Activation::Tanh ? tanh(h) : relu(h);
  }
  return h;
}

Learner mlp_classifier(const MlpSpec& spec, std::vector<Tensor> init) {
  return Learner{std::move(init), [spec](std::span<const Var> params, const Batch& batch) {
                   Graph& g = params.front().graph();
                   Var logits = mlp_forward(spec, params, g.constant(batch.x));
                   return softmax_cross_entropy(logits, batch.labels);
                 }};
}

LossAndGrad loss_and_grad(const LossFn& loss, std::span<const Tensor> params, const Batch& batch) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.leaf(p));
  Var l = loss(vars, batch);
  auto grads = g.grad(l, vars);
  LossAndGrad out;
  out.loss = l.value().item();
  for (const auto& gr : grads) out.grads.push_back(gr.value());
  return out;
}

double evaluate_loss(const LossFn& loss, std::span<const Tensor> params, const Batch& batch) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.constant(p));
  return loss(vars, batch).value().item();
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t m = logits.rows();
  const std::size_t n = logits.cols();
  if (labels.size() != m) throw ShapeError("accuracy: label count differs from rows");
  if (m == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    if (static_cast<int>(best) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m);
}

}  // namespace warpadam
