#include <omp.h>

#include <cmath>

#include "warpadam/kernels.hpp"

namespace warpadam::kernels {

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* row = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t m, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  }
}

void tanh(std::span<const double> in, std::span<double> out) {
  const auto count = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = std::tanh(in[i]);
}

void adaptive_step(std::span<double> w, std::span<double> m, std::span<double> v,
                   std::span<const double> g, const AdaptiveStep& s) {
  const auto count = static_cast<std::ptrdiff_t>(w.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * (g[i] * g[i]);
    const double m_hat = m[i] / s.bias1;
    const double v_hat = v[i] / s.bias2;
    const double denom = std::sqrt(v_hat + s.epsilon);
    if (denom != 0.0) w[i] = w[i] - (s.eta / denom) * m_hat;
  }
}

}  // namespace parallel

namespace {

bool go_parallel(std::size_t work) {
  return work >= kParallelThreshold && !omp_in_parallel();
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n) && m > 1) {
    parallel::matmul(a, b, out, m, k, n);
  } else {
    serial::matmul(a, b, out, m, k, n);
  }
}

void transpose(std::span<const double> in, std::span<double> out, std::size_t m, std::size_t n) {
  if (go_parallel(m * n)) {
    parallel::transpose(in, out, m, n);
  } else {
    serial::transpose(in, out, m, n);
  }
}

void tanh(std::span<const double> in, std::span<double> out) {
  if (go_parallel(in.size())) {
    parallel::tanh(in, out);
  } else {
    serial::tanh(in, out);
  }
}

void adaptive_step(std::span<double> w, std::span<double> m, std::span<double> v,
                   std::span<const double> g, const AdaptiveStep& s) {
  if (go_parallel(w.size())) {
    parallel::adaptive_step(w, m, v, g, s);
  } else {
    serial::adaptive_step(w, m, v, g, s);
  }
}

}  // namespace warpadam::kernels
