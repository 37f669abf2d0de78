#include <algorithm>
#include <cmath>

#include "stressbench/kernels.hpp"

namespace stressbench::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void multiply_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void complex_magnitude_scalar(const double* z, double* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const double re = z[2 * k];
    const double im = z[2 * k + 1];
    out[k] = std::sqrt(re * re + im * im);
  }
}

void floor_subtract_scalar(const double* mag, const double* noise, double alpha, double beta,
                           double* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = std::max(mag[k] - alpha * noise[k], beta * mag[k]);
  }
}

void adam_update_scalar(double* params, const double* grads, double* m, double* v, std::size_t n,
                        const AdamStep& s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = m[i] / s.bias_correction1;
    const double v_hat = v[i] / s.bias_correction2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{
      "scalar",
      dot_scalar,
      sum_squares_scalar,
      axpy_scalar,
      multiply_scalar,
      complex_magnitude_scalar,
      floor_subtract_scalar,
      adam_update_scalar,
  };
  return table;
}

}  // namespace stressbench::kernels
