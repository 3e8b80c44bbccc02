// NEON kernel variants for aarch64, where float64x2 is baseline.

#include <arm_neon.h>
#include <cstring>

#include "bilevel/kernels.hpp"

namespace bilevel::kernels {
namespace {

double k_dot(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  for (; i + 2 <= n; i += 2) acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
  double acc = vaddvq_f64(acc0) + vaddvq_f64(acc1);
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double k_sum_sq(const double* x, std::size_t n) { return k_dot(x, x, n); }

void k_axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void k_scale(double a, const double* x, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void k_add(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void k_sub(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void k_gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = k_dot(a + r * cols, x, cols);
}

void k_gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  std::memset(y, 0, cols * sizeof(double));
  for (std::size_t r = 0; r < rows; ++r) k_axpy(x[r], a + r * cols, y, cols);
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t{k_dot, k_sum_sq, k_axpy, k_scale, k_add, k_sub, k_gemv, k_gemv_t, "neon"};
  return t;
}

}  // namespace bilevel::kernels
