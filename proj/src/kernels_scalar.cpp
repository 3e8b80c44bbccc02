#include <cstring>

#include "bilevel/kernels.hpp"

namespace bilevel::kernels {
namespace {

double k_dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double k_sum_sq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void k_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void k_scale(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void k_add(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void k_sub(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void k_gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = k_dot(a + r * cols, x, cols);
}

void k_gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  std::memset(y, 0, cols * sizeof(double));
  for (std::size_t r = 0; r < rows; ++r) k_axpy(x[r], a + r * cols, y, cols);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{k_dot, k_sum_sq, k_axpy, k_scale, k_add, k_sub, k_gemv, k_gemv_t, "scalar"};
  return t;
}

}  // namespace bilevel::kernels
