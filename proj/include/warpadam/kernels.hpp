#pragma once

#include <cstddef>
#include <span>

// Data-parallel inner loops. Every kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::parallel; the two produce
// bit-identical results because parallelism is only over independent output
// elements and every per-element reduction keeps the serial order.
namespace warpadam::kernels {

struct AdaptiveStep {
  double beta1;
  double beta2;
  double epsilon;
  double eta;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

namespace serial {

// out[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
// out[n x m] = in[m x n]^T
void transpose(std::span<const double> in, std::span<double> out, std::size_t m, std::size_t n);
void tanh(std::span<const double> in, std::span<double> out);
// Moment accumulation and parameter update of the Adam rule, in place.
void adaptive_step(std::span<double> w, std::span<double> m, std::span<double> v,
                   std::span<const double> g, const AdaptiveStep& s);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void transpose(std::span<const double> in, std::span<double> out, std::size_t m, std::size_t n);
void tanh(std::span<const double> in, std::span<double> out);
void adaptive_step(std::span<double> w, std::span<double> m, std::span<double> v,
                   std::span<const double> g, const AdaptiveStep& s);

}  // namespace parallel

// Work (multiply-adds or elements) below which dispatch stays serial.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void transpose(std::span<const double> in, std::span<double> out, std::size_t m, std::size_t n);
void tanh(std::span<const double> in, std::span<double> out);
void adaptive_step(std::span<double> w, std::span<double> m, std::span<double> v,
                   std::span<const double> g, const AdaptiveStep& s);

}  // namespace warpadam::kernels
