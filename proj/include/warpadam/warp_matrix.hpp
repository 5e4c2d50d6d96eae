#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "warpadam/graph.hpp"
#include "warpadam/tensor.hpp"

namespace warpadam {

enum class WarpForm : std::uint8_t { Identity = 0, Diagonal = 1, Dense = 2, Kronecker = 3 };

const char* to_string(WarpForm form);

// Largest flattened size that gets a full d x d matrix by default.
inline constexpr std::size_t kDenseWarpMaxDim = 256;

// The linear transform P applied to one parameter tensor's flattened gradient.
//
// Learnable entries are stored flat:
//   Identity   none
//   Diagonal   d values
//   Dense      d*d values, row-major
//   Kronecker  a*a values of A followed by b*b values of B, with a*b = d;
//              applied to G (the gradient viewed as a x b) as A G B^T.
class WarpMatrix {
 public:
  static WarpMatrix identity(std::size_t dim);
  static WarpMatrix diagonal(std::vector<double> entries);
  static WarpMatrix dense(std::size_t dim, std::vector<double> entries);
  static WarpMatrix dense(const Tensor& matrix);
  static WarpMatrix kronecker(const Tensor& a, const Tensor& b);

  // Exact identity represented in the requested form. Kronecker needs a*b = dim.
  static WarpMatrix identity_as(WarpForm form, std::size_t dim, std::size_t a = 0, std::size_t b = 0);
  // Identity in the default form for a parameter of this shape: Dense up to
  // kDenseWarpMaxDim, Kronecker(rows, cols) for larger matrices, Diagonal otherwise.
  static WarpMatrix default_for(const Shape& parameter_shape);

  WarpForm form() const { return form_; }
  std::size_t dim() const { return dim_; }
  std::size_t factor_a() const { return a_; }
  std::size_t factor_b() const { return b_; }

  std::span<const double> entries() const { return entries_; }
  std::span<double> entries() { return entries_; }
  // Same form and dimensions, new entries.
  WarpMatrix with_entries(std::vector<double> entries) const;

  Tensor factor_A() const;
  Tensor factor_B() const;
  // Full d x d matrix.
  Tensor materialize() const;

  friend bool operator==(const WarpMatrix&, const WarpMatrix&) = default;

 private:
  WarpMatrix(WarpForm form, std::size_t dim, std::size_t a, std::size_t b, std::vector<double> entries);

  WarpForm form_ = WarpForm::Identity;
  std::size_t dim_ = 0;
  std::size_t a_ = 0;
  std::size_t b_ = 0;
  std::vector<double> entries_;
};

// One WarpMatrix per parameter tensor.
using WarpSet = std::vector<WarpMatrix>;

WarpSet default_warps(std::span<const Shape> parameter_shapes);
WarpSet identity_warps(std::span<const Shape> parameter_shapes, WarpForm form);

// P g with the output shaped like g.
Tensor warp_apply(const WarpMatrix& P, const Tensor& g);

// lambda * sum of squared off-diagonal entries; factor-wise for Kronecker.
double tod_penalty(const WarpMatrix& P, double lambda);
// Gradient of tod_penalty over P.entries().
std::vector<double> tod_penalty_grad(const WarpMatrix& P, double lambda);

// Frobenius norm of the off-diagonal part of the materialized matrix.
double offdiag_norm(const WarpMatrix& P);

// P inside a Graph. Diagonal and Dense hold one flat node; Kronecker holds
// its two factors as [a x a] and [b x b] nodes.
struct WarpVar {
  WarpForm form = WarpForm::Identity;
  std::size_t dim = 0;
  std::size_t a = 0;
  std::size_t b = 0;
  std::vector<Var> nodes;
};

WarpVar to_var(Graph& graph, const WarpMatrix& P, bool requires_grad);
Var warp_apply(const WarpVar& P, const Var& g);
// Flattens per-node gradients back into the WarpMatrix::entries() layout.
std::vector<double> flatten_entries(std::span<const Var> node_grads);

}  // namespace warpadam
