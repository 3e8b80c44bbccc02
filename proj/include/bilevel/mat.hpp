#pragma once

#include <cstddef>
#include <vector>

#include "bilevel/vec.hpp"

namespace bilevel {

// Everything dense in this library is desk scale; the hard cap keeps a typo'd
// dimension from turning an experiment into an accidental O(n^3) stall.
inline constexpr std::size_t kDenseCap = 2000;

// Row-major dense matrix.
class DenseMat {
 public:
  DenseMat() = default;
  DenseMat(std::size_t rows, std::size_t cols);  // zero-filled
  static DenseMat identity(std::size_t n);
  static DenseMat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return e_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return e_[r * cols_ + c]; }
  const double* data() const { return e_.data(); }
  double* data() { return e_.data(); }

  // Set only after a successful Cholesky factorization inside solve_spd.
  bool spd_verified() const { return spd_verified_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> e_;
  mutable bool spd_verified_ = false;

  friend Vec solve_spd(const DenseMat& a, const Vec& b);
};

Vec matvec(const DenseMat& a, const Vec& x);    // A x
Vec matvec_t(const DenseMat& a, const Vec& x);  // A^T x

// Solve A x = b for symmetric positive definite A via Cholesky. A is checked
// for symmetry (max deviation 1e-10 relative to the largest entry) and left
// unmodified. Raises NotSPD on a non-positive pivot, DimMismatch on shape.
Vec solve_spd(const DenseMat& a, const Vec& b);

// All eigenvalues of a symmetric matrix, ascending (cyclic Jacobi).
std::vector<double> sym_eigenvalues(const DenseMat& a);

// Largest |eigenvalue| of a symmetric matrix, i.e. its spectral norm.
double sym_spectral_norm(const DenseMat& a);

}  // namespace bilevel
