#include "bilevel/mat.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/kernels.hpp"

namespace bilevel {

DenseMat::DenseMat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows > kDenseCap || cols > kDenseCap)
    fail(ErrorKind::dense_cap_exceeded, "dense matrix " + std::to_string(rows) + "x" +
                                            std::to_string(cols) + " exceeds cap " +
                                            std::to_string(kDenseCap));
  e_.assign(rows * cols, 0.0);
}

DenseMat DenseMat::identity(std::size_t n) {
  DenseMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMat DenseMat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  DenseMat m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) fail(ErrorKind::dim_mismatch, "from_rows: ragged rows");
    std::size_t j = 0;
    for (double x : row) m(i, j++) = x;
    ++i;
  }
  return m;
}

Vec matvec(const DenseMat& a, const Vec& x) {
  require_dim(x, a.cols(), "matvec");
  Vec y(a.rows());
  kernels::gemv(a.data(), a.rows(), a.cols(), x.data(), y.data());
  require_finite(y, "matvec");
  return y;
}

Vec matvec_t(const DenseMat& a, const Vec& x) {
  require_dim(x, a.rows(), "matvec_t");
  Vec y(a.cols());
  kernels::gemv_t(a.data(), a.rows(), a.cols(), x.data(), y.data());
  require_finite(y, "matvec_t");
  return y;
}

Vec solve_spd(const DenseMat& a, const Vec& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n) fail(ErrorKind::dim_mismatch, "solve_spd: matrix not square");
  require_dim(b, n, "solve_spd rhs");

  double amax = 0.0, asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      amax = std::max(amax, std::abs(a(i, j)));
      asym = std::max(asym, std::abs(a(i, j) - a(j, i)));
    }
  if (asym > 1e-10 * std::max(1.0, amax))
    fail(ErrorKind::not_spd, "solve_spd: matrix is not symmetric");

  // Lower-triangular Cholesky factor, in a scratch copy.
  std::vector<double> l(a.data(), a.data() + n * n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = l[j * n + j] - kernels::dot(&l[j * n], &l[j * n], j);
    if (!(d > 0.0) || !std::isfinite(d))
      fail(ErrorKind::not_spd, "solve_spd: non-positive pivot at column " + std::to_string(j));
    d = std::sqrt(d);
    l[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i)
      l[i * n + j] = (l[i * n + j] - kernels::dot(&l[i * n], &l[j * n], j)) / d;
  }
  a.spd_verified_ = true;

  // L y = b, then L^T x = y.
  std::vector<double> x(b.data(), b.data() + n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = (x[i] - kernels::dot(&l[i * n], x.data(), i)) / l[i * n + i];
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * x[k];
    x[ii] = s / l[ii * n + ii];
  }
  return Vec::from(std::move(x));
}

std::vector<double> sym_eigenvalues(const DenseMat& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) fail(ErrorKind::dim_mismatch, "sym_eigenvalues: matrix not square");
  std::vector<double> m(a.data(), a.data() + n * n);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return m[i * n + j]; };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = at(k, p), mkq = at(k, q);
          at(k, p) = c * mkp - s * mkq;
          at(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = at(p, k), mqk = at(q, k);
          at(p, k) = c * mpk - s * mqk;
          at(q, k) = s * mpk + c * mqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = at(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

double sym_spectral_norm(const DenseMat& a) {
  const auto ev = sym_eigenvalues(a);
  double r = 0.0;
  for (double e : ev) r = std::max(r, std::abs(e));
  return r;
}

}  // namespace bilevel
