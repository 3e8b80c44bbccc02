#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bilevel/mat.hpp"
#include "bilevel/problem.hpp"

namespace bilevel {

// L_in  = 1/2 phi^T H phi - phi^T (B theta + c),  H symmetric positive definite
// L_out = 1/2 ||phi - t||^2 + gamma/2 ||theta||^2
//
// The mixed second derivative d_theta d_phi L_in is the constant matrix -B,
// which makes every estimator's behavior checkable against closed forms.
class QuadraticBilevel final : public BilevelProblem {
 public:
  QuadraticBilevel(DenseMat h, DenseMat b, Vec c, Vec t, double gamma);

  // The 1-D reference instance: H = 1, B = 1, c = 0, t = 0, gamma = 0, i.e.
  // inner loss (phi - theta)^2 / 2 up to a phi-independent shift, outer loss
  // phi^2 / 2. Minimizer phi* = theta, outer gradient theta.
  static QuadraticBilevel p1();

  struct RandomOptions {
    std::size_t phi_dim = 10;
    std::size_t theta_dim = 4;
    double mu = 0.5;         // smallest Hessian eigenvalue
    double smoothness = 3.0; // largest Hessian eigenvalue
    double gamma = 0.0;
  };
  // Seeded instance with exactly known extremal eigenvalues: H is a random
  // Givens-rotation conjugation of a log-spaced diagonal spectrum.
  static QuadraticBilevel random(std::uint64_t seed, const RandomOptions& opts);
  static QuadraticBilevel random(std::uint64_t seed) { return random(seed, RandomOptions{}); }

  Vec solve_inner(const Vec& theta) const;  // phi* = H^-1 (B theta + c), dense solve
  // (phi*, exact outer gradient gamma*theta + B^T H^-1 (phi* - t)).
  std::pair<Vec, Vec> closed_form_solution(const Vec& theta) const;

  const DenseMat& hessian() const { return h_; }
  const DenseMat& coupling() const { return b_; }
  double mu() const { return mu_; }
  double smoothness() const { return smoothness_; }

  std::size_t phi_dim() const override { return h_.rows(); }
  std::size_t theta_dim() const override { return b_.cols(); }
  double inner_loss(const Vec& phi, const Vec& theta) const override;
  double outer_loss(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_outer(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_outer(const Vec& phi, const Vec& theta) const override;
  Vec hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;
  Vec cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;

 private:
  DenseMat h_, b_;
  Vec c_, t_;
  double gamma_ = 0.0;
  double mu_ = 0.0, smoothness_ = 0.0;  // known for generated instances, else 0
};

// Ridge-regression hyperparameter tuning. theta holds log-penalties:
//   L_in  = 1/2m ||X_tr phi - y_tr||^2 + 1/2 sum_j exp(theta_j) phi_j^2
//   L_out = 1/2m_val ||X_val phi - y_val||^2          (no explicit theta term)
// Scalar mode (theta_dim = 1) broadcasts one log-penalty across coordinates.
class RidgeHyperopt final : public BilevelProblem {
 public:
  struct Options {
    std::size_t n_train = 60;
    std::size_t n_val = 40;
    std::size_t features = 10;
    bool per_coordinate = false;
    double noise = 0.1;
    std::string target = "linear";  // or "sinusoid"
  };
  RidgeHyperopt(DenseMat x_train, Vec y_train, DenseMat x_val, Vec y_val, bool per_coordinate);
  // Gaussian design, planted target, additive noise; fully seed-determined.
  static RidgeHyperopt synthetic(std::uint64_t seed, const Options& opts);
  static RidgeHyperopt synthetic(std::uint64_t seed) { return synthetic(seed, Options{}); }

  double validation_loss(const Vec& phi) const;

  std::size_t phi_dim() const override { return x_train_.cols(); }
  std::size_t theta_dim() const override { return per_coordinate_ ? x_train_.cols() : 1; }
  double inner_loss(const Vec& phi, const Vec& theta) const override;
  double outer_loss(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_outer(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_outer(const Vec& phi, const Vec& theta) const override;
  Vec hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;
  Vec cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;

 private:
  Vec penalties(const Vec& theta) const;  // exp(theta), broadcast in scalar mode
  DenseMat x_train_, x_val_;
  Vec y_train_, y_val_;
  bool per_coordinate_ = false;
};

// One sampled task of the meta-ridge family. Shared parameter layout
// theta = (log lambda, w0):
//   L_in  = 1/2m ||X_tr phi - y_tr||^2 + exp(log lambda)/2 ||phi - w0||^2
//   L_out = 1/2m_val ||X_val phi - y_val||^2
class MetaRidgeTask final : public BilevelProblem {
 public:
  MetaRidgeTask(DenseMat x_train, Vec y_train, DenseMat x_val, Vec y_val);

  std::size_t phi_dim() const override { return x_train_.cols(); }
  std::size_t theta_dim() const override { return 1 + x_train_.cols(); }
  double inner_loss(const Vec& phi, const Vec& theta) const override;
  double outer_loss(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_outer(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_outer(const Vec& phi, const Vec& theta) const override;
  Vec hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;
  Vec cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;

 private:
  DenseMat x_train_, x_val_;
  Vec y_train_, y_val_;
};

// Task distribution for meta-ridge: every task regresses onto a weight vector
// drawn around a shared latent center, so learning (log lambda, w0) across
// tasks is meaningful. sample_task(seed) is a pure function of
// (distribution seed, task seed).
class MetaRidge {
 public:
  struct Options {
    std::size_t features = 8;
    std::size_t train_per_task = 20;  // default 80/20 split of a 25-sample task
    std::size_t val_per_task = 5;
    double noise = 0.1;
    double task_spread = 0.3;  // stddev of per-task weight offset from the center
  };
  MetaRidge(std::uint64_t seed, const Options& opts);
  explicit MetaRidge(std::uint64_t seed) : MetaRidge(seed, Options{}) {}

  MetaRidgeTask sample_task(std::uint64_t task_seed) const;
  std::size_t theta_dim() const { return 1 + opts_.features; }
  std::size_t phi_dim() const { return opts_.features; }
  const Vec& latent_center() const { return center_; }

 private:
  Options opts_;
  std::uint64_t seed_ = 0;
  Vec center_;
};

// Layered quadratic energy over free activities phi = (phi^0, ..., phi^L):
//   E = 1/2 ||phi^0 - x||^2 + 1/2 sum_l ||phi^(l+1) - tanh(W^l phi^l + b^l)||^2
// theta concatenates row-major W^l then b^l for each l. The input layer is
// soft-anchored: phi^0 is a free variable pulled toward x by the first term.
// Outer loss scores the top layer: 1/2 ||phi^L - y||^2.
class PredictiveCodingNet final : public BilevelProblem {
 public:
  PredictiveCodingNet(std::vector<std::size_t> layers, Vec x, Vec y);
  // Random weights (fan-in scaled), random input, target produced by a forward
  // pass of a second, independent weight draw.
  static PredictiveCodingNet random(std::uint64_t seed, std::vector<std::size_t> layers);

  // Activities produced by the feed-forward sweep phi^0 = x,
  // phi^(l+1) = tanh(W^l phi^l + b^l); the energy at this point is exactly 0.
  Vec forward_pass(const Vec& theta) const;
  Vec forward_pass(const Vec& theta, const Vec& x) const;

  const Vec& initial_theta() const { return theta0_; }
  const std::vector<std::size_t>& layers() const { return layers_; }
  Vec output_layer(const Vec& phi) const;  // copy of phi^L

  std::size_t phi_dim() const override;
  std::size_t theta_dim() const override;
  double inner_loss(const Vec& phi, const Vec& theta) const override;
  double outer_loss(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_inner(const Vec& phi, const Vec& theta) const override;
  Vec grad_phi_outer(const Vec& phi, const Vec& theta) const override;
  Vec grad_theta_outer(const Vec& phi, const Vec& theta) const override;
  Vec hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;
  Vec cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override;

 private:
  std::vector<std::size_t> layers_;
  Vec x_, y_;
  Vec theta0_;
};

}  // namespace bilevel
