#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"
#include "synthetic.hpp"

namespace bilevel {

namespace {
// theta = (log lambda, w0); split helpers keep the layout in one place.
double log_lambda(const Vec& theta) { return theta[0]; }
Vec center_of(const Vec& theta) {
  Vec w0(theta.size() - 1);
  for (std::size_t i = 0; i < w0.size(); ++i) w0[i] = theta[i + 1];
  return w0;
}
}  // namespace

MetaRidgeTask::MetaRidgeTask(DenseMat x_train, Vec y_train, DenseMat x_val, Vec y_val)
    : x_train_(std::move(x_train)),
      x_val_(std::move(x_val)),
      y_train_(std::move(y_train)),
      y_val_(std::move(y_val)) {
  require_dim(y_train_, x_train_.rows(), "meta task y_train");
  require_dim(y_val_, x_val_.rows(), "meta task y_val");
  if (x_train_.cols() != x_val_.cols())
    fail(ErrorKind::dim_mismatch, "meta task: train/val feature count differs");
}

double MetaRidgeTask::inner_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_train_, phi), y_train_);
  const Vec d = sub(phi, center_of(theta));
  return 0.5 * norm_sq(r) / double(x_train_.rows()) + 0.5 * std::exp(log_lambda(theta)) * norm_sq(d);
}

double MetaRidgeTask::outer_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_val_, phi), y_val_);
  return 0.5 * norm_sq(r) / double(x_val_.rows());
}

Vec MetaRidgeTask::grad_phi_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_train_, phi), y_train_);
  Vec g = scaled(matvec_t(x_train_, r), 1.0 / double(x_train_.rows()));
  axpy_into(g, std::exp(log_lambda(theta)), sub(phi, center_of(theta)));
  return g;
}

Vec MetaRidgeTask::grad_theta_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const double lam = std::exp(log_lambda(theta));
  const Vec d = sub(phi, center_of(theta));
  Vec g(theta_dim());
  g[0] = 0.5 * lam * norm_sq(d);
  for (std::size_t i = 0; i < d.size(); ++i) g[i + 1] = -lam * d[i];
  require_finite(g, "meta grad_theta_inner");
  return g;
}

Vec MetaRidgeTask::grad_phi_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec r = sub(matvec(x_val_, phi), y_val_);
  return scaled(matvec_t(x_val_, r), 1.0 / double(x_val_.rows()));
}

Vec MetaRidgeTask::grad_theta_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return Vec::zeros(theta_dim());
}

Vec MetaRidgeTask::hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const {
  check_args(phi, theta);
  require_dim(v, phi_dim(), "hvp v");
  Vec hv = scaled(matvec_t(x_train_, matvec(x_train_, v)), 1.0 / double(x_train_.rows()));
  axpy_into(hv, std::exp(log_lambda(theta)), v);
  return hv;
}

Vec MetaRidgeTask::cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const {
  check_args(phi, theta);
  require_dim(v, phi_dim(), "cross_vjp v");
  const double lam = std::exp(log_lambda(theta));
  const Vec d = sub(phi, center_of(theta));
  Vec g(theta_dim());
  g[0] = lam * dot(v, d);
  for (std::size_t i = 0; i < v.size(); ++i) g[i + 1] = -lam * v[i];
  require_finite(g, "meta cross_vjp");
  return g;
}

MetaRidge::MetaRidge(std::uint64_t seed, const Options& opts) : opts_(opts), seed_(seed) {
  if (opts_.features == 0 || opts_.train_per_task == 0 || opts_.val_per_task == 0)
    fail(ErrorKind::insufficient_points, "MetaRidge: zero-sized task layout");
  Rng rng(Rng::derive(seed, 0xce7e));
  center_ = rng.gaussian_vec(opts_.features);
}

MetaRidgeTask MetaRidge::sample_task(std::uint64_t task_seed) const {
  Rng rng(Rng::derive(Rng::derive(seed_, 0x7a5c), task_seed));
  Vec w = center_;
  axpy_into(w, opts_.task_spread, rng.gaussian_vec(opts_.features));
  DenseMat x_train = synth::gaussian_design(rng, opts_.train_per_task, opts_.features);
  Vec y_train = synth::planted_targets(rng, x_train, w, opts_.noise, "linear");
  DenseMat x_val = synth::gaussian_design(rng, opts_.val_per_task, opts_.features);
  Vec y_val = synth::planted_targets(rng, x_val, w, opts_.noise, "linear");
  return MetaRidgeTask(std::move(x_train), std::move(y_train), std::move(x_val), std::move(y_val));
}

}  // namespace bilevel
