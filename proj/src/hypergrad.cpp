#include "bilevel/errors.hpp"
#include "bilevel/hypergrad.hpp"

#include <cmath>

#include "bilevel/mat.hpp"

namespace bilevel {

Vec assemble_gradient(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                      const PiVector& pi) {
  require_dim(pi.pi, p.phi_dim(), "pi");
  Vec g = p.grad_theta_outer(phi_hat, theta);
  axpy_into(g, -1.0, p.cross_vjp_inner(phi_hat, theta, pi.pi));
  return g;
}

HypergradEstimate oracle_exact(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta) {
  const std::size_t n = p.phi_dim();
  if (n > kDenseCap)
    fail(ErrorKind::dense_cap_exceeded,
         "oracle_exact materializes the inner Hessian; |phi| = " + std::to_string(n) +
             " is past the dense cap " + std::to_string(kDenseCap));
  HypergradEstimate est;
  est.method = "oracle";

  DenseMat h(n, n);
  Vec e(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Vec col = p.hvp_inner(phi_hat, theta, e);
    ++est.hvp_count;
    for (std::size_t i = 0; i < n; ++i) h(i, j) = col[i];
    e[j] = 0.0;
  }
  const Vec g = p.grad_phi_outer(phi_hat, theta);
  PiVector pi{solve_spd(h, g)};
  est.residual = norm(sub(matvec(h, pi.pi), g));
  est.grad = assemble_gradient(p, phi_hat, theta, pi);
  return est;
}

HypergradEstimate first_order(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta) {
  HypergradEstimate est;
  est.method = "first_order";
  est.grad = p.grad_theta_outer(phi_hat, theta);
  return est;
}

HypergradEstimate one_step_identity(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta) {
  HypergradEstimate est;
  est.method = "identity";
  est.grad = assemble_gradient(p, phi_hat, theta, PiVector{p.grad_phi_outer(phi_hat, theta)});
  return est;
}

HypergradEstimate rbp_neumann(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                              double alpha, int max_iters, double tol) {
  if (!(alpha > 0.0)) fail(ErrorKind::non_positive_value, "rbp_neumann: alpha must be > 0");
  if (max_iters < 0) fail(ErrorKind::non_positive_value, "rbp_neumann: max_iters must be >= 0");
  HypergradEstimate est;
  est.method = "rbp";

  const Vec g = p.grad_phi_outer(phi_hat, theta);
  Vec pi = Vec::zeros(p.phi_dim());
  // The residual H pi - g is what each pass measures anyway; the reported
  // value is the last one measured (so hvp_count stays exactly = iterations).
  double last_residual = norm(g);
  for (int k = 0; k < max_iters; ++k) {
    Vec update = p.hvp_inner(phi_hat, theta, pi);  // H pi - g, then scaled by -alpha
    ++est.hvp_count;
    ++est.phase2_iters;
    axpy_into(update, -1.0, g);
    last_residual = norm(update);
    axpy_into(pi, -alpha, update);
    if (norm(pi) > 1e12)
      fail(ErrorKind::diverged,
           "rbp_neumann: iterate norm passed 1e12 at step " + std::to_string(k + 1) +
               "; alpha is too large for the Hessian spectrum");
    if (tol > 0.0 && alpha * last_residual <= tol) break;
  }
  est.residual = last_residual;
  est.grad = assemble_gradient(p, phi_hat, theta, PiVector{std::move(pi)});
  return est;
}

HypergradEstimate conjugate_gradient(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                                     int max_iters, double tol) {
  if (max_iters < 0) fail(ErrorKind::non_positive_value, "conjugate_gradient: max_iters >= 0");
  if (!(tol >= 0.0)) fail(ErrorKind::non_positive_value, "conjugate_gradient: tol >= 0");
  HypergradEstimate est;
  est.method = "cg";

  const Vec g = p.grad_phi_outer(phi_hat, theta);
  const double stop = tol * (1.0 + norm(g));
  Vec pi = Vec::zeros(p.phi_dim());
  Vec r = g;  // residual g - H pi at pi = 0
  Vec d = r;
  double rs = norm_sq(r);
  while (std::sqrt(rs) > stop && est.phase2_iters < max_iters) {
    const Vec hd = p.hvp_inner(phi_hat, theta, d);
    ++est.hvp_count;
    ++est.phase2_iters;
    const double curvature = dot(d, hd);
    if (!(curvature > 0.0))
      fail(ErrorKind::indefinite_detected,
           "conjugate_gradient: direction with curvature " + std::to_string(curvature) +
               "; the inner Hessian is not positive definite here");
    const double a = rs / curvature;
    axpy_into(pi, a, d);
    axpy_into(r, -a, hd);
    const double rs_next = norm_sq(r);
    d = add(r, scaled(d, rs_next / rs));
    rs = rs_next;
  }
  est.residual = std::sqrt(rs);
  est.grad = assemble_gradient(p, phi_hat, theta, PiVector{std::move(pi)});
  return est;
}

HypergradEstimate ep_estimate(const BilevelProblem& p, const Vec& theta, const Vec& phi_hat0,
                              const FDStencil& stencil, const SolverConfig& solver,
                              const EpOptions& opts) {
  if (!(stencil.step > 0.0))
    fail(ErrorKind::non_positive_beta, "ep_estimate: stencil has no positive step attached");
  if (stencil.coefficients.size() != stencil.nodes.size() ||
      stencil.coefficients.size() != std::size_t(stencil.points))
    fail(ErrorKind::dim_mismatch, "ep_estimate: malformed stencil");
  require_dim(phi_hat0, p.phi_dim(), "phi_hat0");

  HypergradEstimate est;
  est.method = "ep";
  est.beta = stencil.step;

  // One warm-start chain per sign, both rooted at the unnudged solution; a
  // node's equilibrium is the best available start for the next node outward.
  Vec chain_pos = phi_hat0, chain_neg = phi_hat0;
  Vec accum = Vec::zeros(p.theta_dim());
  for (std::size_t i = 0; i < stencil.nodes.size(); ++i) {
    const int node = stencil.nodes[i];
    const double b = node * stencil.step;
    const Vec* phi_node = &phi_hat0;
    if (node != 0) {
      Vec& chain = node > 0 ? chain_pos : chain_neg;
      const Vec& start = opts.chain_warm_starts ? chain : phi_hat0;
      InnerSolveReport rep;
      try {
        rep = minimize_augmented(p, theta, b, start, solver, opts.allow_negative_beta);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::diverged)
          fail(ErrorKind::phase_diverged,
               "ep_estimate: nudged solve diverged at node " + std::to_string(node) +
                   " (beta = " + std::to_string(b) + ")");
        throw;
      }
      est.phase2_iters += rep.iters;
      ++est.inner_solve_count;
      chain = std::move(rep.phi_hat);
      phi_node = &chain;
    }
    const double alpha_i = stencil.coefficients[i];
    if (alpha_i == 0.0) continue;
    Vec term = p.grad_theta_inner(*phi_node, theta);
    if (b != 0.0) axpy_into(term, b, p.grad_theta_outer(*phi_node, theta));
    axpy_into(accum, alpha_i, term);
  }
  est.grad = scaled(accum, 1.0 / stencil.step);
  return est;
}

PiVector ep_pi_recover(const BilevelProblem& p, const Vec& theta, const Vec& phi_hat0,
                       const Vec& phi_hat_beta, double beta) {
  (void)theta;
  require_dim(phi_hat0, p.phi_dim(), "phi_hat0");
  require_same_dim(phi_hat0, phi_hat_beta, "ep_pi_recover");
  if (beta == 0.0 || !std::isfinite(beta))
    fail(ErrorKind::non_positive_beta, "ep_pi_recover: beta must be nonzero and finite");
  return PiVector{scaled(sub(phi_hat0, phi_hat_beta), 1.0 / beta)};
}

}  // namespace bilevel
