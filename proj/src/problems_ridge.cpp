#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"
#include "synthetic.hpp"

namespace bilevel {

RidgeHyperopt::RidgeHyperopt(DenseMat x_train, Vec y_train, DenseMat x_val, Vec y_val,
                             bool per_coordinate)
    : x_train_(std::move(x_train)),
      x_val_(std::move(x_val)),
      y_train_(std::move(y_train)),
      y_val_(std::move(y_val)),
      per_coordinate_(per_coordinate) {
  require_dim(y_train_, x_train_.rows(), "ridge y_train");
  require_dim(y_val_, x_val_.rows(), "ridge y_val");
  if (x_train_.cols() != x_val_.cols())
    fail(ErrorKind::dim_mismatch, "ridge: train/val feature count differs");
  if (x_train_.rows() == 0 || x_val_.rows() == 0)
    fail(ErrorKind::insufficient_points, "ridge: empty train or val split");
}

RidgeHyperopt RidgeHyperopt::synthetic(std::uint64_t seed, const Options& opts) {
  Rng rng(Rng::derive(seed, 0x51d6e));
  const Vec w = rng.gaussian_vec(opts.features);
  DenseMat x_train = synth::gaussian_design(rng, opts.n_train, opts.features);
  Vec y_train = synth::planted_targets(rng, x_train, w, opts.noise, opts.target);
  DenseMat x_val = synth::gaussian_design(rng, opts.n_val, opts.features);
  Vec y_val = synth::planted_targets(rng, x_val, w, opts.noise, opts.target);
  return RidgeHyperopt(std::move(x_train), std::move(y_train), std::move(x_val), std::move(y_val),
                       opts.per_coordinate);
}

Vec RidgeHyperopt::penalties(const Vec& theta) const {
  Vec p(phi_dim());
  for (std::size_t j = 0; j < p.size(); ++j)
    p[j] = std::exp(per_coordinate_ ? theta[j] : theta[0]);
  require_finite(p, "ridge penalties");
  return p;
}

double RidgeHyperopt::validation_loss(const Vec& phi) const {
  Vec r = sub(matvec(x_val_, phi), y_val_);
  return 0.5 * norm_sq(r) / double(x_val_.rows());
}

double RidgeHyperopt::inner_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_train_, phi), y_train_);
  const Vec p = penalties(theta);
  double reg = 0.0;
  for (std::size_t j = 0; j < phi.size(); ++j) reg += p[j] * phi[j] * phi[j];
  return 0.5 * norm_sq(r) / double(x_train_.rows()) + 0.5 * reg;
}

double RidgeHyperopt::outer_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return validation_loss(phi);
}

Vec RidgeHyperopt::grad_phi_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_train_, phi), y_train_);
  Vec g = scaled(matvec_t(x_train_, r), 1.0 / double(x_train_.rows()));
  const Vec p = penalties(theta);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += p[j] * phi[j];
  require_finite(g, "ridge grad_phi_inner");
  return g;
}

Vec RidgeHyperopt::grad_theta_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec p = penalties(theta);
  Vec g(theta_dim());
  if (per_coordinate_) {
    for (std::size_t j = 0; j < phi.size(); ++j) g[j] = 0.5 * p[j] * phi[j] * phi[j];
  } else {
    double s = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) s += p[j] * phi[j] * phi[j];
    g[0] = 0.5 * s;
  }
  require_finite(g, "ridge grad_theta_inner");
  return g;
}

Vec RidgeHyperopt::grad_phi_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_val_, phi), y_val_);
  return scaled(matvec_t(x_val_, r), 1.0 / double(x_val_.rows()));
}

Vec RidgeHyperopt::grad_theta_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return Vec::zeros(theta_dim());
}

Vec RidgeHyperopt::hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const {
  check_args(phi, theta);
  require_dim(v, phi_dim(), "hvp v");
  Vec hv = scaled(matvec_t(x_train_, matvec(x_train_, v)), 1.0 / double(x_train_.rows()));
  const Vec p = penalties(theta);
  for (std::size_t j = 0; j < hv.size(); ++j) hv[j] += p[j] * v[j];
  require_finite(hv, "ridge hvp");
  return hv;
}

Vec RidgeHyperopt::cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const {
  check_args(phi, theta);
  require_dim(v, phi_dim(), "cross_vjp v");
  const Vec p = penalties(theta);
  Vec g(theta_dim());
  if (per_coordinate_) {
    for (std::size_t j = 0; j < phi.size(); ++j) g[j] = v[j] * p[j] * phi[j];
  } else {
    double s = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) s += v[j] * p[j] * phi[j];
    g[0] = s;
  }
  require_finite(g, "ridge cross_vjp");
  return g;
}

}  // namespace bilevel
