#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

// Low-level dense kernels behind all vector/matrix math. Each operation has a
// scalar reference implementation plus optional SIMD variants (AVX2 on x86-64,
// NEON on aarch64) compiled in their own translation units. The dispatcher
// picks the best variant the host CPU supports, once per process, so repeated
// runs of the same binary on the same machine take the same code path.
//
// SIMD variants may reassociate reductions and contract mul+add into FMA, so
// they are equivalence-tested against the scalar reference under a relative
// tolerance, not bit-for-bit.

namespace bilevel::kernels {

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum_sq)(const double* x, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);    // y += a*x
  void (*scale)(double a, const double* x, double* out, std::size_t n); // out = a*x
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  // Row-major rows x cols matrix times vector: y = A x, and y = A^T x.
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  const char* name;
};

const KernelTable& scalar_table();

// Active table. Honors the BILEVEL_KERNELS env var ("scalar", "avx2", "neon")
// on first use; unavailable requests fall back to the best supported variant.
const KernelTable& active();

// Force a variant by name (used by the equivalence tests). Returns false and
// leaves the active table unchanged if the variant is not usable on this host.
bool force(std::string_view name);

// Names of all variants usable on this host; always contains "scalar".
std::vector<std::string_view> available();

inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline double sum_sq(const double* x, std::size_t n) { return active().sum_sq(x, n); }
inline void axpy(double a, const double* x, double* y, std::size_t n) { active().axpy(a, x, y, n); }
inline void scale(double a, const double* x, double* out, std::size_t n) { active().scale(a, x, out, n); }
inline void add(const double* x, const double* y, double* out, std::size_t n) { active().add(x, y, out, n); }
inline void sub(const double* x, const double* y, double* out, std::size_t n) { active().sub(x, y, out, n); }
inline void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  active().gemv(a, rows, cols, x, y);
}
inline void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  active().gemv_t(a, rows, cols, x, y);
}

}  // namespace bilevel::kernels
