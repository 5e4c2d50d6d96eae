#include <algorithm>
#include <cmath>

#include "warpadam/error.hpp"
#include "warpadam/graph.hpp"
#include "warpadam/kernels.hpp"

namespace warpadam {

namespace {

template <class F>
Tensor map1(const Tensor& a, F f) {
  Tensor out = Tensor::zeros_like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor map2(const Tensor& a, const Tensor& b, const char* what, F f) {
  require_same_shape(a, b, what);
  Tensor out = Tensor::zeros_like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

void require_matrix(const Var& v, const char* what) {
  if (v.value().rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_string(v.shape()));
  }
}

double safe_ratio(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

}  // namespace

Var add(const Var& a, const Var& b) {
  return a.graph().record({a, b}, map2(a.value(), b.value(), "add", std::plus<>()),
                          [](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{u, u};
                          });
}

Var sub(const Var& a, const Var& b) {
  return a.graph().record({a, b}, map2(a.value(), b.value(), "sub", std::minus<>()),
                          [](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{u, neg(u)};
                          });
}

Var mul(const Var& a, const Var& b) {
  return a.graph().record({a, b}, map2(a.value(), b.value(), "mul", std::multiplies<>()),
                          [](const Var& u, std::span<const Var> in, const Var&) {
                            return std::vector<Var>{mul(u, in[1]), mul(u, in[0])};
                          });
}

Var div(const Var& a, const Var& b) {
  return a.graph().record({a, b}, map2(a.value(), b.value(), "div", std::divides<>()),
                          [](const Var& u, std::span<const Var> in, const Var& y) {
                            return std::vector<Var>{div(u, in[1]), neg(div(mul(u, y), in[1]))};
                          });
}

Var safe_div(const Var& a, const Var& b) {
  return a.graph().record({a, b}, map2(a.value(), b.value(), "safe_div", safe_ratio),
                          [](const Var& u, std::span<const Var> in, const Var& y) {
                            return std::vector<Var>{safe_div(u, in[1]),
                                                    neg(safe_div(mul(u, y), in[1]))};
                          });
}

Var neg(const Var& a) {
  return a.graph().record({a}, map1(a.value(), std::negate<>()),
                          [](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{neg(u)};
                          });
}

Var scale(const Var& a, double c) {
  return a.graph().record({a}, map1(a.value(), [c](double x) { return c * x; }),
                          [c](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{scale(u, c)};
                          });
}

Var add_scalar(const Var& a, double c) {
  return a.graph().record({a}, map1(a.value(), [c](double x) { return x + c; }),
                          [](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{u};
                          });
}

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " * " +
                     shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  kernels::matmul(av.data(), bv.data(), out.data(), av.rows(), av.cols(), bv.cols());
  return a.graph().record({a, b}, std::move(out),
                          [](const Var& u, std::span<const Var> in, const Var&) {
                            return std::vector<Var>{matmul(u, transpose(in[1])),
                                                    matmul(transpose(in[0]), u)};
                          });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  kernels::transpose(av.data(), out.data(), av.rows(), av.cols());
  return a.graph().record({a}, std::move(out),
                          [](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{transpose(u)};
                          });
}

Var reshape(const Var& a, Shape shape) {
  Shape original = a.shape();
  return a.graph().record({a}, a.value().reshaped(std::move(shape)),
                          [original](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{reshape(u, original)};
                          });
}

Var tanh(const Var& a) {
  Tensor out = Tensor::zeros_like(a.value());
  kernels::tanh(a.value().data(), out.data());
  return a.graph().record({a}, std::move(out),
                          [](const Var& u, std::span<const Var>, const Var& y) {
                            // u * (1 - y^2)
                            return std::vector<Var>{mul(u, add_scalar(neg(square(y)), 1.0))};
                          });
}

Var relu(const Var& a) {
  Tensor mask = map1(a.value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
  return a.graph().record({a}, map1(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }),
                          [mask](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{mul(u, u.graph().constant(mask))};
                          });
}

Var exp(const Var& a) {
  return a.graph().record({a}, map1(a.value(), [](double x) { return std::exp(x); }),
                          [](const Var& u, std::span<const Var>, const Var& y) {
                            return std::vector<Var>{mul(u, y)};
                          });
}

Var log(const Var& a) {
  return a.graph().record({a}, map1(a.value(), [](double x) { return std::log(x); }),
                          [](const Var& u, std::span<const Var> in, const Var&) {
                            return std::vector<Var>{div(u, in[0])};
                          });
}

Var sqrt(const Var& a) {
  return a.graph().record({a}, map1(a.value(), [](double x) { return std::sqrt(x); }),
                          [](const Var& u, std::span<const Var>, const Var& y) {
                            return std::vector<Var>{safe_div(u, scale(y, 2.0))};
                          });
}

Var square(const Var& a) {
  return a.graph().record({a}, map1(a.value(), [](double x) { return x * x; }),
                          [](const Var& u, std::span<const Var> in, const Var&) {
                            return std::vector<Var>{mul(u, scale(in[0], 2.0))};
                          });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  Shape original = a.shape();
  return a.graph().record({a}, Tensor::scalar(s),
                          [original](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{expand(u, original)};
                          });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var expand(const Var& scalar, Shape shape) {
  if (scalar.size() != 1) {
    throw ShapeError("expand needs a one-element tensor, got " + shape_string(scalar.shape()));
  }
  Shape original = scalar.shape();
  return scalar.graph().record({scalar}, Tensor(std::move(shape), scalar.value().item()),
                               [original](const Var& u, std::span<const Var>, const Var&) {
                                 return std::vector<Var>{reshape(sum(u), original)};
                               });
}

Var sum_rows(const Var& a) {
  require_matrix(a, "sum_rows");
  const Tensor& av = a.value();
  const std::size_t m = av.rows();
  const std::size_t n = av.cols();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += av.at(i, j);
  }
  return a.graph().record({a}, std::move(out),
                          [m](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{repeat_rows(u, m)};
                          });
}

Var repeat_rows(const Var& row, std::size_t m) {
  require_matrix(row, "repeat_rows");
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw ShapeError("repeat_rows needs a [1 x n] row, got " + shape_string(rv.shape()));
  const std::size_t n = rv.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(rv.data().begin(), rv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return row.graph().record({row}, std::move(out),
                            [](const Var& u, std::span<const Var>, const Var&) {
                              return std::vector<Var>{sum_rows(u)};
                            });
}

Var sum_cols(const Var& a) {
  require_matrix(a, "sum_cols");
  const Tensor& av = a.value();
  const std::size_t m = av.rows();
  const std::size_t n = av.cols();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += av.at(i, j);
    out[i] = s;
  }
  return a.graph().record({a}, std::move(out),
                          [n](const Var& u, std::span<const Var>, const Var&) {
                            return std::vector<Var>{repeat_cols(u, n)};
                          });
}

Var repeat_cols(const Var& col, std::size_t n) {
  require_matrix(col, "repeat_cols");
  const Tensor& cv = col.value();
  if (cv.cols() != 1) throw ShapeError("repeat_cols needs an [m x 1] column, got " + shape_string(cv.shape()));
  const std::size_t m = cv.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = cv[i];
  }
  return col.graph().record({col}, std::move(out),
                            [](const Var& u, std::span<const Var>, const Var&) {
                              return std::vector<Var>{sum_cols(u)};
                            });
}

Var add_row(const Var& a, const Var& row) {
  require_matrix(a, "add_row");
  return add(a, repeat_rows(row, a.value().rows()));
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  const Tensor& lv = logits.value();
  const std::size_t m = lv.rows();
  const std::size_t n = lv.cols();
  if (labels.size() != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(m) + " rows");
  }
  Graph& g = logits.graph();
  // Subtracting the row max is exact for log-softmax, so it enters as a constant.
  Tensor shift({m, n});
  Tensor onehot({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = lv.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, lv.at(i, j));
    for (std::size_t j = 0; j < n; ++j) shift.at(i, j) = -mx;
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= n) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(n) + " classes");
    }
    onehot.at(i, static_cast<std::size_t>(label)) = 1.0;
  }
  Var z = add(logits, g.constant(std::move(shift)));
  Var log_norm = log(sum_cols(exp(z)));
  Var log_probs = sub(z, repeat_cols(log_norm, n));
  return scale(sum(mul(g.constant(std::move(onehot)), log_probs)), -1.0 / static_cast<double>(m));
}

Var mse(const Var& pred, const Var& target) { return mean(square(sub(pred, target))); }

}  // namespace warpadam
