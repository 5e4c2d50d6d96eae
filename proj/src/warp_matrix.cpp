#include "warpadam/warp_matrix.hpp"

#include <cmath>

#include "warpadam/error.hpp"
#include "warpadam/kernels.hpp"

namespace warpadam {

const char* to_string(WarpForm form) {
  switch (form) {
    case WarpForm::Identity: return "identity";
    case WarpForm::Diagonal: return "diagonal";
    case WarpForm::Dense: return "dense";
    case WarpForm::Kronecker: return "kronecker";
  }
  return "unknown";
}

WarpMatrix::WarpMatrix(WarpForm form, std::size_t dim, std::size_t a, std::size_t b,
                       std::vector<double> entries)
    : form_(form), dim_(dim), a_(a), b_(b), entries_(std::move(entries)) {
  if (dim_ == 0) throw ShapeError("warp matrix dimension must be positive");
  std::size_t expected = 0;
  switch (form_) {
    case WarpForm::Identity: expected = 0; break;
    case WarpForm::Diagonal: expected = dim_; break;
    case WarpForm::Dense: expected = dim_ * dim_; break;
    case WarpForm::Kronecker:
      if (a_ == 0 || b_ == 0 || a_ * b_ != dim_) {
        throw ShapeError("kronecker factors " + std::to_string(a_) + "x" + std::to_string(b_) +
                         " do not match dimension " + std::to_string(dim_));
      }
      expected = a_ * a_ + b_ * b_;
      break;
  }
  if (entries_.size() != expected) {
    throw ShapeError(std::string(to_string(form_)) + " warp matrix of dimension " +
                     std::to_string(dim_) + " needs " + std::to_string(expected) +
                     " entries, got " + std::to_string(entries_.size()));
  }
}

WarpMatrix WarpMatrix::identity(std::size_t dim) { return {WarpForm::Identity, dim, 0, 0, {}}; }

WarpMatrix WarpMatrix::diagonal(std::vector<double> entries) {
  const std::size_t d = entries.size();
  return {WarpForm::Diagonal, d, 0, 0, std::move(entries)};
}

WarpMatrix WarpMatrix::dense(std::size_t dim, std::vector<double> entries) {
  return {WarpForm::Dense, dim, 0, 0, std::move(entries)};
}

WarpMatrix WarpMatrix::dense(const Tensor& matrix) {
  if (matrix.rows() != matrix.cols()) throw ShapeError("dense warp matrix must be square");
  return dense(matrix.rows(), matrix.values());
}

WarpMatrix WarpMatrix::kronecker(const Tensor& a, const Tensor& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols()) {
    throw ShapeError("kronecker factors must be square");
  }
  std::vector<double> entries(a.values());
  entries.insert(entries.end(), b.data().begin(), b.data().end());
  return {WarpForm::Kronecker, a.rows() * b.rows(), a.rows(), b.rows(), std::move(entries)};
}

WarpMatrix WarpMatrix::identity_as(WarpForm form, std::size_t dim, std::size_t a, std::size_t b) {
  switch (form) {
    case WarpForm::Identity: return identity(dim);
    case WarpForm::Diagonal: return diagonal(std::vector<double>(dim, 1.0));
    case WarpForm::Dense: return dense(Tensor::identity(dim));
    case WarpForm::Kronecker:
      if (a * b != dim) {
        throw ShapeError("kronecker factors " + std::to_string(a) + "x" + std::to_string(b) +
                         " do not match dimension " + std::to_string(dim));
      }
      return kronecker(Tensor::identity(a), Tensor::identity(b));
  }
  throw ContractError("unknown warp form");
}

WarpMatrix WarpMatrix::default_for(const Shape& parameter_shape) {
  const std::size_t d = shape_size(parameter_shape);
  if (d <= kDenseWarpMaxDim) return identity_as(WarpForm::Dense, d);
  if (parameter_shape.size() == 2 && parameter_shape[0] > 1 && parameter_shape[1] > 1) {
    return identity_as(WarpForm::Kronecker, d, parameter_shape[0], parameter_shape[1]);
  }
  return identity_as(WarpForm::Diagonal, d);
}

WarpMatrix WarpMatrix::with_entries(std::vector<double> entries) const {
  return {form_, dim_, a_, b_, std::move(entries)};
}

Tensor WarpMatrix::factor_A() const {
  if (form_ != WarpForm::Kronecker) throw ContractError("factor_A on a non-Kronecker warp");
  return Tensor({a_, a_}, std::vector<double>(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(a_ * a_)));
}

Tensor WarpMatrix::factor_B() const {
  if (form_ != WarpForm::Kronecker) throw ContractError("factor_B on a non-Kronecker warp");
  return Tensor({b_, b_}, std::vector<double>(entries_.begin() + static_cast<std::ptrdiff_t>(a_ * a_), entries_.end()));
}

Tensor WarpMatrix::materialize() const {
  Tensor out({dim_, dim_});
  switch (form_) {
    case WarpForm::Identity:
      for (std::size_t i = 0; i < dim_; ++i) out.at(i, i) = 1.0;
      break;
    case WarpForm::Diagonal:
      for (std::size_t i = 0; i < dim_; ++i) out.at(i, i) = entries_[i];
      break;
    case WarpForm::Dense:
      out = Tensor({dim_, dim_}, entries_);
      break;
    case WarpForm::Kronecker: {
      const Tensor A = factor_A();
      const Tensor B = factor_B();
      for (std::size_t i = 0; i < a_; ++i)
        for (std::size_t k = 0; k < a_; ++k)
          for (std::size_t j = 0; j < b_; ++j)
            for (std::size_t l = 0; l < b_; ++l) out.at(i * b_ + j, k * b_ + l) = A.at(i, k) * B.at(j, l);
      break;
    }
  }
  return out;
}

WarpSet default_warps(std::span<const Shape> parameter_shapes) {
  WarpSet out;
  for (const auto& s : parameter_shapes) out.push_back(WarpMatrix::default_for(s));
  return out;
}

WarpSet identity_warps(std::span<const Shape> parameter_shapes, WarpForm form) {
  WarpSet out;
  for (const auto& s : parameter_shapes) {
    const std::size_t d = shape_size(s);
    if (form == WarpForm::Kronecker) {
      if (s.size() != 2) throw ShapeError("kronecker warp needs a matrix-shaped parameter");
      out.push_back(WarpMatrix::identity_as(form, d, s[0], s[1]));
    } else {
      out.push_back(WarpMatrix::identity_as(form, d));
    }
  }
  return out;
}

Tensor warp_apply(const WarpMatrix& P, const Tensor& g) {
  if (g.size() != P.dim()) {
    throw ShapeError("warp of dimension " + std::to_string(P.dim()) + " applied to gradient of shape " +
                     shape_string(g.shape()));
  }
  const std::size_t d = P.dim();
  Tensor out = Tensor::zeros_like(g);
  const auto e = P.entries();
  switch (P.form()) {
    case WarpForm::Identity:
      out = g;
      break;
    case WarpForm::Diagonal:
      for (std::size_t i = 0; i < d; ++i) out[i] = e[i] * g[i];
      break;
    case WarpForm::Dense:
      kernels::matmul(e, g.data(), out.data(), d, d, 1);
      break;
    case WarpForm::Kronecker: {
      const std::size_t a = P.factor_a();
      const std::size_t b = P.factor_b();
      const auto A = e.subspan(0, a * a);
      const auto B = e.subspan(a * a);
      std::vector<double> ag(d);
      std::vector<double> bt(b * b);
      kernels::matmul(A, g.data(), ag, a, a, b);
      kernels::transpose(B, bt, b, b);
      kernels::matmul(ag, bt, out.data(), a, b, b);
      break;
    }
  }
  return out;
}

namespace {

double offdiag_sq(std::span<const double> m, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += m[i * n + j] * m[i * n + j];
  return s;
}

void offdiag_grad(std::span<const double> m, std::span<double> out, std::size_t n, double lambda) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = i == j ? 0.0 : 2.0 * lambda * m[i * n + j];
}

}  // namespace

double tod_penalty(const WarpMatrix& P, double lambda) {
  if (lambda < 0.0) throw ContractError("tod penalty weight must be non-negative");
  if (lambda == 0.0) return 0.0;
  const auto e = P.entries();
  switch (P.form()) {
    case WarpForm::Identity:
    case WarpForm::Diagonal:
      return 0.0;
    case WarpForm::Dense:
      return lambda * offdiag_sq(e, P.dim());
    case WarpForm::Kronecker: {
      const std::size_t a = P.factor_a();
      return lambda * (offdiag_sq(e.subspan(0, a * a), a) + offdiag_sq(e.subspan(a * a), P.factor_b()));
    }
  }
  return 0.0;
}

std::vector<double> tod_penalty_grad(const WarpMatrix& P, double lambda) {
  std::vector<double> g(P.entries().size(), 0.0);
  const auto e = P.entries();
  switch (P.form()) {
    case WarpForm::Identity:
    case WarpForm::Diagonal:
      break;
    case WarpForm::Dense:
      offdiag_grad(e, g, P.dim(), lambda);
      break;
    case WarpForm::Kronecker: {
      const std::size_t a = P.factor_a();
      offdiag_grad(e.subspan(0, a * a), std::span(g).subspan(0, a * a), a, lambda);
      offdiag_grad(e.subspan(a * a), std::span(g).subspan(a * a), P.factor_b(), lambda);
      break;
    }
  }
  return g;
}

double offdiag_norm(const WarpMatrix& P) {
  switch (P.form()) {
    case WarpForm::Identity:
    case WarpForm::Diagonal:
      return 0.0;
    case WarpForm::Dense:
      return std::sqrt(offdiag_sq(P.entries(), P.dim()));
    case WarpForm::Kronecker: {
      const Tensor full = P.materialize();
      return std::sqrt(offdiag_sq(full.data(), P.dim()));
    }
  }
  return 0.0;
}

WarpVar to_var(Graph& graph, const WarpMatrix& P, bool requires_grad) {
  WarpVar out{P.form(), P.dim(), P.factor_a(), P.factor_b(), {}};
  switch (P.form()) {
    case WarpForm::Identity:
      break;
    case WarpForm::Diagonal:
    case WarpForm::Dense: {
      const auto e = P.entries();
      out.nodes.push_back(
          graph.leaf(Tensor({e.size()}, std::vector<double>(e.begin(), e.end())), requires_grad));
      break;
    }
    case WarpForm::Kronecker:
      out.nodes.push_back(graph.leaf(P.factor_A(), requires_grad));
      out.nodes.push_back(graph.leaf(P.factor_B(), requires_grad));
      break;
  }
  return out;
}

Var warp_apply(const WarpVar& P, const Var& g) {
  if (g.size() != P.dim) {
    throw ShapeError("warp of dimension " + std::to_string(P.dim) + " applied to gradient of shape " +
                     shape_string(g.shape()));
  }
  const Shape shape = g.shape();
  switch (P.form) {
    case WarpForm::Identity:
      return g;
    case WarpForm::Diagonal:
      return mul(reshape(P.nodes[0], shape), g);
    case WarpForm::Dense: {
      Var m = reshape(P.nodes[0], {P.dim, P.dim});
      return reshape(matmul(m, reshape(g, {P.dim, 1})), shape);
    }
    case WarpForm::Kronecker: {
      Var G = reshape(g, {P.a, P.b});
      return reshape(matmul(matmul(P.nodes[0], G), transpose(P.nodes[1])), shape);
    }
  }
  throw ContractError("unknown warp form");
}

std::vector<double> flatten_entries(std::span<const Var> node_grads) {
  std::vector<double> out;
  for (const auto& v : node_grads) {
    const auto d = v.value().data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace warpadam
