#pragma once

#include <optional>
#include <vector>

#include "bilevel/problem.hpp"

namespace bilevel {

enum class InnerMethod { gd, heavy_ball };

struct SolverConfig {
  InnerMethod method = InnerMethod::gd;
  // Unset means auto: 1 / (1.05 * L), with L the largest Ritz value of the
  // inner Hessian at the start point (30 power iterations, fixed seed).
  std::optional<double> step_size;
  double momentum = 0.0;  // heavy_ball only
  double grad_tol = 1e-10;
  int max_iters = 10000;
  bool record_loss_trace = false;
  int power_iters = 30;
};

struct InnerSolveReport {
  Vec phi_hat;
  int iters = 0;
  double final_grad_norm = 0.0;
  bool converged = false;
  std::vector<double> loss_trace;  // empty unless requested; includes start
};

// Descend the inner loss from phi0 at fixed theta until the gradient norm
// drops to grad_tol or max_iters is hit. Raises Diverged when the loss or
// gradient norm stops being finite.
InnerSolveReport minimize_inner(const BilevelProblem& p, const Vec& theta, const Vec& phi0,
                                const SolverConfig& cfg);

// Same loop on the nudged objective L_in + beta * L_out. beta < 0 makes the
// objective lose convexity once beta exceeds the curvature ratio and is
// refused unless the caller opts in; opted-in runs that blow up raise
// Diverged. beta == 0 reproduces minimize_inner output exactly.
InnerSolveReport minimize_augmented(const BilevelProblem& p, const Vec& theta, double beta,
                                    const Vec& phi0, const SolverConfig& cfg,
                                    bool allow_negative_beta = false);

// Largest Ritz value of the inner Hessian at (phi, theta) by power iteration;
// deterministic for fixed inputs.
double estimate_smoothness(const BilevelProblem& p, const Vec& phi, const Vec& theta,
                           int iters = 30);

// Smallest Ritz value via power iteration on (shift I - H). The estimate
// approaches the true minimum eigenvalue from above.
double estimate_strong_convexity(const BilevelProblem& p, const Vec& phi, const Vec& theta,
                                 int iters = 50);

}  // namespace bilevel
