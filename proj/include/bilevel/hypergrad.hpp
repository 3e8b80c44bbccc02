#pragma once

#include <optional>
#include <string>

#include "bilevel/problem.hpp"
#include "bilevel/solver.hpp"
#include "bilevel/stencil.hpp"

namespace bilevel {

// Estimate of the outer-parameter gradient at (phi_hat, theta), with the cost
// counters every experiment reports. `residual` is the phase-2 linear-system
// residual where one exists; `beta` the nudge step where one was used.
struct HypergradEstimate {
  Vec grad;
  std::string method;
  int phase2_iters = 0;
  int hvp_count = 0;
  int inner_solve_count = 0;
  std::optional<double> beta;
  std::optional<double> residual;
};

// Row vector pi multiplying the inner Hessian inverse, i.e. an approximation
// of grad_phi_outer * (d2_phi L_in)^-1 at (phi_hat, theta).
struct PiVector {
  Vec pi;
};

// Direct part minus the cross term: grad_theta_outer - cross_vjp_inner(pi).
// pi = 0 reduces to the direct part alone.
Vec assemble_gradient(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                      const PiVector& pi);

// Materializes the inner Hessian with |phi| HVPs on basis vectors and solves
// the pi system by Cholesky. The most expensive and most accurate baseline;
// refuses |phi| beyond the dense cap.
HypergradEstimate oracle_exact(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta);

// pi = 0: just the direct outer gradient.
HypergradEstimate first_order(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta);

// Inner Hessian treated as identity: pi = grad_phi_outer.
HypergradEstimate one_step_identity(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta);

// Fixed-point iteration pi <- pi - alpha (H pi - g) from pi = 0; after k steps
// pi equals the truncated Neumann series alpha * sum_{i<k} (I - alpha H)^i g.
// Stops early once the update norm drops to tol (tol = 0 disables). Raises
// Diverged when ||pi|| passes 1e12 (alpha too large for the spectrum).
HypergradEstimate rbp_neumann(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                              double alpha, int max_iters, double tol = 0.0);

// Conjugate gradient on H pi = g with HVP access only; stops at residual
// <= tol * (1 + ||g||). A non-positive curvature p^T H p raises
// IndefiniteDetected rather than silently producing garbage.
HypergradEstimate conjugate_gradient(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                                     int max_iters, double tol);

struct EpOptions {
  bool allow_negative_beta = false;  // symmetric stencils need it
  bool chain_warm_starts = true;     // false: every node starts from phi_hat0
};

// Equilibrium-propagation estimate: re-solve the nudged objective
// L_in + (node * step) L_out at each stencil node (node 0 reuses phi_hat0),
// combine d_theta of the nudged loss with the stencil weights, divide by the
// step. Warm starts chain outward from the unnudged solution, one chain per
// sign. Uses no HVPs at all. Solver failures surface as PhaseDiverged naming
// the node.
HypergradEstimate ep_estimate(const BilevelProblem& p, const Vec& theta, const Vec& phi_hat0,
                              const FDStencil& stencil, const SolverConfig& solver,
                              const EpOptions& opts = {});

// Two-equilibrium recovery (phi_hat0 - phi_hat_beta) / beta. As beta -> 0 this
// approaches -d_beta phi*|_0, whose transpose is exactly the pi* row vector the
// implicit-differentiation methods solve for.
PiVector ep_pi_recover(const BilevelProblem& p, const Vec& theta, const Vec& phi_hat0,
                       const Vec& phi_hat_beta, double beta);

}  // namespace bilevel
