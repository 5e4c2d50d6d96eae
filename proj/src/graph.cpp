#include "warpadam/graph.hpp"

#include <cmath>
#include <optional>

#include "warpadam/error.hpp"

namespace warpadam {

const Tensor& Var::value() const {
  if (!graph_) throw ContractError("use of an empty Var");
  return graph_->nodes_[id_].value;
}

bool Var::requires_grad() const {
  return graph_ && graph_->nodes_[id_].requires_grad;
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  bool any = false;
  for (const auto& in : inputs) {
    if (in.graph_ != this) throw ContractError("operation mixes nodes from different graphs");
    any = any || nodes_[in.id_].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  if (any && recording()) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
    node.requires_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::detach(const Var& v) { return constant(v.value()); }

std::vector<Var> Graph::sweep(const Var& loss, std::span<const std::size_t> targets,
                              bool create_graph) {
  if (loss.graph_ != this) throw ContractError("loss belongs to a different graph");
  if (loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace(*this);

  const std::size_t end = loss.id_ + 1;
  std::vector<Var> grads(end);
  grads[loss.id_] = constant(Tensor(loss.shape(), 1.0));

  for (std::size_t i = end; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!grads[i].valid() || !node.requires_grad || !node.backward) continue;
    const std::vector<Var> local = node.backward(grads[i], node.inputs, Var(this, i));
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j].id_;
      if (!nodes_[in].requires_grad || !local[j].valid()) continue;
      grads[in] = grads[in].valid() ? add(grads[in], local[j]) : local[j];
    }
  }

  std::vector<Var> out;
  out.reserve(targets.size());
  for (std::size_t t : targets) {
    if (t < end && grads[t].valid()) {
      out.push_back(grads[t]);
    } else {
      out.push_back(constant(Tensor(nodes_[t].value.shape())));
    }
  }
  return out;
}

std::vector<Var> Graph::grad(const Var& loss, std::span<const Var> wrt, bool create_graph) {
  std::vector<std::size_t> ids;
  ids.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.graph_ != this) throw ContractError("gradient target belongs to a different graph");
    ids.push_back(w.id_);
  }
  return sweep(loss, ids, create_graph);
}

std::map<std::size_t, Tensor> Graph::backward(const Var& loss) {
  std::vector<std::size_t> leaves;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf && nodes_[i].requires_grad) leaves.push_back(i);
  }
  const auto grads = sweep(loss, leaves, false);
  std::map<std::size_t, Tensor> out;
  for (std::size_t i = 0; i < leaves.size(); ++i) out.emplace(leaves[i], grads[i].value());
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad needs h > 0");
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace warpadam
