#pragma once

// Data-parallel inner loops shared by the DSP and training code.
//
// Every kernel has a scalar reference implementation. On x86-64 an AVX2+FMA
// variant is compiled separately and picked at first use when the CPU
// supports it. Set STRESSBENCH_SIMD=scalar to force the reference path.
// Variants agree up to floating-point reassociation (see test_kernels).

#include <cstddef>
#include <string_view>

namespace stressbench::kernels {

struct AdamStep {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  // 1 - beta^t for the current step t.
  double bias_correction1;
  double bias_correction2;
};

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a * b (elementwise)
  void (*multiply)(const double* a, const double* b, double* out, std::size_t n);
  // out[k] = |z[k]| for interleaved (re, im) pairs.
  void (*complex_magnitude)(const double* interleaved, double* out, std::size_t n);
  // out[k] = max(mag[k] - alpha * noise[k], beta * mag[k])
  void (*floor_subtract)(const double* mag, const double* noise, double alpha, double beta,
                         double* out, std::size_t n);
  // In-place Adam update of params given grads and moment buffers.
  void (*adam_update)(double* params, const double* grads, double* m, double* v, std::size_t n,
                      const AdamStep& step);
};

// Dispatched table (resolved once, thread-safe).
const KernelTable& active();

const KernelTable& scalar();

// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2();

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline double sum_squares(const double* x, std::size_t n) { return active().sum_squares(x, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

}  // namespace stressbench::kernels
