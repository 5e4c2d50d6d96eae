#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "warpadam/tensor.hpp"

namespace warpadam {

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  bool valid() const { return graph_ != nullptr; }

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Local gradient rule of a recorded operation: given the upstream gradient,
// the operation's inputs and its output, return one gradient per input. Rules
// are written with Var operations, so gradients are themselves differentiable
// when backward runs with create_graph.
using BackwardFn =
    std::function<std::vector<Var>(const Var& upstream, std::span<const Var> inputs, const Var& output)>;

// Append-only tape of operation records. Node ids are assigned in creation
// order, which is a topological order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);

  // Records an operation. The node requires grad iff some input does and the
  // graph is recording; otherwise the rule is dropped.
  Var record(std::vector<Var> inputs, Tensor value, BackwardFn backward);

  // Same value, cut from the graph.
  Var detach(const Var& v);

  // d(loss)/d(wrt[i]) for each i. Inputs the loss does not reach get zeros.
  // With create_graph the returned gradients are differentiable nodes.
  std::vector<Var> grad(const Var& loss, std::span<const Var> wrt, bool create_graph = false);

  // Gradient of loss for every requires-grad leaf, keyed by node id.
  std::map<std::size_t, Tensor> backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return no_grad_depth_ == 0; }

  // While alive, new nodes never require grad.
  class NoGradGuard {
   public:
    explicit NoGradGuard(Graph& g) : graph_(g) { ++graph_.no_grad_depth_; }
    ~NoGradGuard() { --graph_.no_grad_depth_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    Graph& graph_;
  };

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::vector<Var> sweep(const Var& loss, std::span<const std::size_t> targets, bool create_graph);

  // deque keeps references stable while backward appends nodes.
  std::deque<Node> nodes_;
  int no_grad_depth_ = 0;
};

// --- differentiable primitives -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
// a / b elementwise, with x / 0 defined as 0.
Var safe_div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// Broadcast a one-element tensor to `shape`.
Var expand(const Var& scalar, Shape shape);
// [m x n] -> [1 x n] column totals, and its adjoint.
Var sum_rows(const Var& a);
Var repeat_rows(const Var& row, std::size_t m);
// [m x n] -> [m x 1] row totals, and its adjoint.
Var sum_cols(const Var& a);
Var repeat_cols(const Var& col, std::size_t n);
// Matrix plus a broadcast [1 x n] row.
Var add_row(const Var& a, const Var& row);

// Mean cross-entropy of row-wise softmax(logits) against integer labels.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
Var mse(const Var& pred, const Var& target);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h, one coordinate at a time.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace warpadam
