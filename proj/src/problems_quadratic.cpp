#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

QuadraticBilevel::QuadraticBilevel(DenseMat h, DenseMat b, Vec c, Vec t, double gamma)
    : h_(std::move(h)), b_(std::move(b)), c_(std::move(c)), t_(std::move(t)), gamma_(gamma) {
  if (h_.rows() != h_.cols()) fail(ErrorKind::dim_mismatch, "QuadraticBilevel: H not square");
  if (b_.rows() != h_.rows()) fail(ErrorKind::dim_mismatch, "QuadraticBilevel: B row count != |phi|");
  require_dim(c_, h_.rows(), "QuadraticBilevel c");
  require_dim(t_, h_.rows(), "QuadraticBilevel t");
}

QuadraticBilevel QuadraticBilevel::p1() {
  QuadraticBilevel q(DenseMat::from_rows({{1.0}}), DenseMat::from_rows({{1.0}}), Vec{0.0}, Vec{0.0},
                     0.0);
  q.mu_ = q.smoothness_ = 1.0;
  return q;
}

QuadraticBilevel QuadraticBilevel::random(std::uint64_t seed, const RandomOptions& opts) {
  if (!(opts.mu > 0.0) || !(opts.smoothness >= opts.mu))
    fail(ErrorKind::non_positive_value, "QuadraticBilevel::random: need 0 < mu <= smoothness");
  const std::size_t n = opts.phi_dim, m = opts.theta_dim;
  Rng rng(Rng::derive(seed, 0x71ad));

  // Log-spaced spectrum with the extremes pinned, conjugated by random Givens
  // rotations: eigenvalues stay exact, so mu/smoothness are known by
  // construction rather than estimated.
  DenseMat h(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : double(i) / double(n - 1);
    h(i, i) = opts.mu * std::pow(opts.smoothness / opts.mu, f);
  }
  const std::size_t rotations = 3 * n;
  for (std::size_t r = 0; r < rotations && n > 1; ++r) {
    const std::size_t i = rng.next_u64() % n;
    std::size_t j = rng.next_u64() % (n - 1);
    if (j >= i) ++j;
    const double a = rng.uniform(0.0, 6.283185307179586);
    const double c = std::cos(a), s = std::sin(a);
    for (std::size_t k = 0; k < n; ++k) {  // rows i, j
      const double hi = h(i, k), hj = h(j, k);
      h(i, k) = c * hi - s * hj;
      h(j, k) = s * hi + c * hj;
    }
    for (std::size_t k = 0; k < n; ++k) {  // columns i, j
      const double hi = h(k, i), hj = h(k, j);
      h(k, i) = c * hi - s * hj;
      h(k, j) = s * hi + c * hj;
    }
  }
  // Exact symmetry despite rounding in the rotations.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) h(i, j) = h(j, i) = 0.5 * (h(i, j) + h(j, i));

  DenseMat b(n, m);
  const double bscale = 1.0 / std::sqrt(double(std::max<std::size_t>(m, 1)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) b(i, j) = bscale * rng.normal();
  Vec c_vec = rng.gaussian_vec(n);
  Vec t_vec = rng.gaussian_vec(n);

  QuadraticBilevel q(std::move(h), std::move(b), std::move(c_vec), std::move(t_vec), opts.gamma);
  q.mu_ = opts.mu;
  q.smoothness_ = opts.smoothness;
  return q;
}

Vec QuadraticBilevel::solve_inner(const Vec& theta) const {
  require_dim(theta, theta_dim(), "theta");
  return solve_spd(h_, add(matvec(b_, theta), c_));
}

std::pair<Vec, Vec> QuadraticBilevel::closed_form_solution(const Vec& theta) const {
  Vec phi_star = solve_inner(theta);
  Vec adj = solve_spd(h_, sub(phi_star, t_));  // H^-1 (phi* - t)
  Vec grad = matvec_t(b_, adj);
  axpy_into(grad, gamma_, theta);
  return {std::move(phi_star), std::move(grad)};
}

double QuadraticBilevel::inner_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return 0.5 * dot(phi, matvec(h_, phi)) - dot(phi, add(matvec(b_, theta), c_));
}

double QuadraticBilevel::outer_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return 0.5 * norm_sq(sub(phi, t_)) + 0.5 * gamma_ * norm_sq(theta);
}

Vec QuadraticBilevel::grad_phi_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  Vec g = matvec(h_, phi);
  axpy_into(g, -1.0, matvec(b_, theta));
  axpy_into(g, -1.0, c_);
  return g;
}

Vec QuadraticBilevel::grad_theta_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return scaled(matvec_t(b_, phi), -1.0);
}

Vec QuadraticBilevel::grad_phi_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return sub(phi, t_);
}

Vec QuadraticBilevel::grad_theta_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return scaled(theta, gamma_);
}

Vec QuadraticBilevel::hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const {
  check_args(phi, theta);
  require_dim(v, phi_dim(), "hvp v");
  return matvec(h_, v);
}

Vec QuadraticBilevel::cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const {
  check_args(phi, theta);
  require_dim(v, phi_dim(), "cross_vjp v");
  return scaled(matvec_t(b_, v), -1.0);
}

}  // namespace bilevel
