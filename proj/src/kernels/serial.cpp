#include <cmath>

#include "warpadam/kernels.hpp"

namespace warpadam::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  }
}

void tanh(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
}

void adaptive_step(std::span<double> w, std::span<double> m, std::span<double> v,
                   std::span<const double> g, const AdaptiveStep& s) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * (g[i] * g[i]);
    const double m_hat = m[i] / s.bias1;
    const double v_hat = v[i] / s.bias2;
    const double denom = std::sqrt(v_hat + s.epsilon);
    // 0/0 only arises with epsilon = 0 and an all-zero history; treat as no move.
    if (denom != 0.0) w[i] = w[i] - (s.eta / denom) * m_hat;
  }
}

}  // namespace warpadam::kernels::serial
