#include "bilevel/errors.hpp"
#include "bilevel/solver.hpp"

#include <cmath>

#include "bilevel/kernels.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

double estimate_smoothness(const BilevelProblem& p, const Vec& phi, const Vec& theta, int iters) {
  Rng rng(0x5ca1ab1e);
  Vec v = rng.unit_vec(p.phi_dim());
  double rayleigh = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vec w = p.hvp_inner(phi, theta, v);
    rayleigh = dot(v, w);
    const double n = norm(w);
    if (n <= 1e-300) return 0.0;  // zero curvature along every visited direction
    v = scaled(w, 1.0 / n);
  }
  return rayleigh;
}

double estimate_strong_convexity(const BilevelProblem& p, const Vec& phi, const Vec& theta,
                                 int iters) {
  const double l = estimate_smoothness(p, phi, theta, std::max(iters, 30));
  const double shift = 1.05 * std::abs(l) + 1e-9;
  Rng rng(0xf1a9);
  Vec v = rng.unit_vec(p.phi_dim());
  double rayleigh = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vec w = scaled(v, shift);
    axpy_into(w, -1.0, p.hvp_inner(phi, theta, v));
    rayleigh = dot(v, w);
    const double n = norm(w);
    if (n <= 1e-300) return shift;
    v = scaled(w, 1.0 / n);
  }
  return shift - rayleigh;
}

namespace {

InnerSolveReport descend(const BilevelProblem& p, const Vec& theta, double beta, const Vec& phi0,
                         const SolverConfig& cfg) {
  require_dim(phi0, p.phi_dim(), "phi0");
  require_dim(theta, p.theta_dim(), "theta");
  if (cfg.step_size && !(*cfg.step_size > 0.0))
    fail(ErrorKind::non_positive_value, "solver step_size must be > 0");
  if (!(cfg.grad_tol >= 0.0))
    fail(ErrorKind::non_positive_value, "solver grad_tol must be >= 0");
  if (cfg.max_iters < 0) fail(ErrorKind::non_positive_value, "solver max_iters must be >= 0");

  const double lr = cfg.step_size
                        ? *cfg.step_size
                        : 1.0 / (1.05 * std::max(estimate_smoothness(p, phi0, theta,
                                                                     cfg.power_iters),
                                                 1e-12));

  auto grad_at = [&](const Vec& q) {
    Vec g = p.grad_phi_inner(q, theta);
    if (beta != 0.0) axpy_into(g, beta, p.grad_phi_outer(q, theta));
    return g;
  };
  auto loss_at = [&](const Vec& q) {
    double v = p.inner_loss(q, theta);
    if (beta != 0.0) v += beta * p.outer_loss(q, theta);
    return v;
  };

  InnerSolveReport rep;
  Vec phi = phi0;
  Vec prev = phi0;  // heavy_ball memory
  if (cfg.record_loss_trace) rep.loss_trace.push_back(loss_at(phi));

  Vec g = grad_at(phi);
  double gn = norm(g);
  while (gn > cfg.grad_tol && rep.iters < cfg.max_iters) {
    Vec next = phi;
    kernels::axpy(-lr, g.data(), next.data(), next.size());
    if (cfg.method == InnerMethod::heavy_ball && cfg.momentum != 0.0) {
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += cfg.momentum * (phi[i] - prev[i]);
    }
    prev = std::move(phi);
    phi = std::move(next);
    ++rep.iters;

    // The problem callbacks raise NonFinite once an entry overflows; translate
    // that, and any non-finite norm/loss, into Diverged.
    try {
      g = grad_at(phi);
      gn = norm(g);
      if (cfg.record_loss_trace) {
        const double lv = loss_at(phi);
        if (!std::isfinite(lv)) fail(ErrorKind::non_finite, "loss");
        rep.loss_trace.push_back(lv);
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::non_finite)
        fail(ErrorKind::diverged,
             "descent diverged after " + std::to_string(rep.iters) + " iterations");
      throw;
    }
    if (!std::isfinite(gn))
      fail(ErrorKind::diverged,
           "descent diverged after " + std::to_string(rep.iters) + " iterations");
  }
  rep.phi_hat = std::move(phi);
  rep.final_grad_norm = gn;
  rep.converged = gn <= cfg.grad_tol;
  return rep;
}

}  // namespace

InnerSolveReport minimize_inner(const BilevelProblem& p, const Vec& theta, const Vec& phi0,
                                const SolverConfig& cfg) {
  return descend(p, theta, 0.0, phi0, cfg);
}

InnerSolveReport minimize_augmented(const BilevelProblem& p, const Vec& theta, double beta,
                                    const Vec& phi0, const SolverConfig& cfg,
                                    bool allow_negative_beta) {
  if (!std::isfinite(beta)) fail(ErrorKind::non_finite, "beta must be finite");
  if (beta < 0.0 && !allow_negative_beta)
    fail(ErrorKind::negative_beta_not_enabled,
         "beta < 0 flips the nudge against the inner curvature; pass the explicit opt-in to "
         "run it anyway");
  return descend(p, theta, beta, phi0, cfg);
}

}  // namespace bilevel
