#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/problem.hpp"
#include "bilevel/solver.hpp"

namespace bilevel {

// Constants of the two-phase error bound
//   B(delta, delta', beta) = B_in (delta + delta')/beta + B_out delta' + C beta/(1 + beta)
// together with the curvature data they were measured alongside. All fields
// stay strictly positive; estimators floor identically-zero measurements at
// 1e-12 (e.g. B_out when the outer loss never touches theta).
struct BoundConstants {
  double b_in = 1.0;
  double b_out = 1.0;
  double c = 1.0;
  double mu = 1.0;
  double rho = 1.0;
  double l_smooth = 1.0;
};

// One cell of an error-vs-(beta, delta) experiment. Failed cells keep their
// position in the output with grad_error = +inf, no bound value, and status
// "failed:<Kind>"; everything else carries status "ok".
struct SweepRecord {
  std::string method;
  double beta = 0.0;
  double delta_injected = 0.0;
  double delta_prime_injected = 0.0;
  double grad_error = 0.0;
  std::optional<double> bound_value;
  std::uint64_t seed = 0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
  bool operator==(const SweepRecord&) const = default;
};

// phi_star + delta * u for a seeded random unit direction u, so the distance
// to the equilibrium is delta exactly (delta = 0 returns the input untouched).
Vec inject_error(const Vec& phi_star, double delta, std::uint64_t seed);

// B_in (delta + delta')/beta + B_out delta' + C beta/(1 + beta). NonPositiveBeta
// for beta <= 0.
double eval_ep_bound(const BoundConstants& k, double delta, double delta_prime, double beta);

struct OptimalBeta {
  double beta = 0.0;
  double bound = 0.0;
};
// Minimizes eval_ep_bound over a 1000-point log grid of beta in [1e-6, 1e3].
// Valid only while the nudge term can dominate the injected error, i.e.
// (delta + delta') < C / B_in; ConditionViolated otherwise.
OptimalBeta optimal_beta_bound(const BoundConstants& k, double delta, double delta_prime);

// The two-point nudged-equilibrium gradient estimate assembled from two
// already-computed equilibria (perturbed or exact):
//   (1/beta) [d_theta L_in(phi_b) - d_theta L_in(phi_0)] + d_theta L_out(phi_b).
Vec ep_two_point(const BilevelProblem& p, const Vec& theta, const Vec& phi_hat0,
                 const Vec& phi_hat_beta, double beta);

struct BetaSweepOptions {
  std::vector<double> beta_grid;
  double delta = 0.0;
  double delta_prime = 0.0;
  std::vector<std::uint64_t> seeds = {0};  // one record per (beta, seed)
  // When set, each ok record carries bound_value = eval_ep_bound(.., beta).
  std::optional<BoundConstants> constants;
  int threads = 1;
  double equilibrium_tol = 1e-12;  // both phases solved to this gradient norm
  int max_iters = 200000;
  // Natural phase-2 protocol: instead of injecting delta' into the exact
  // nudged equilibrium, re-solve the nudged phase from the perturbed base
  // point to natural_tol and record the achieved distance as delta'.
  bool natural_phase2 = false;
  double natural_tol = 1e-8;
};
// For every (beta, seed) cell: perturb the two equilibria, form the two-point
// estimate, and record its distance to the exact-equilibrium dense oracle.
// Cell failures (diverged phases and the like) become failed records, not
// aborts. Output order and content depend only on the options, never on
// thread count.
std::vector<SweepRecord> run_beta_sweep(const BilevelProblem& p, const Vec& theta,
                                        const BetaSweepOptions& opts);

struct DeltaScalingOptions {
  int num_seeds = 20;
  std::uint64_t seed = 0;
  int threads = 1;
  double equilibrium_tol = 1e-12;
  double phase2_tol = 1e-14;  // cg / rbp stopping tolerance
  int max_iters = 200000;
  // Candidate nudge steps for method "ep_opt_beta"; empty = log grid
  // [1e-4, 1], 13 points.
  std::vector<double> ep_beta_grid;
};
// Log-log slope of mean gradient-estimate error against injected delta.
// method: "cg" | "rbp" (phase-2 error only, linear scaling) or "ep_opt_beta"
// (two-point estimate with delta' = delta at the per-delta best beta,
// square-root scaling). The _full variant also returns every raw cell as a
// SweepRecord (cg/rbp rows carry beta = 0; failed cells stay in place);
// means skip failed cells.
struct DeltaScalingResult {
  double slope = 0.0;
  std::vector<SweepRecord> records;
};
DeltaScalingResult run_delta_scaling_full(const BilevelProblem& p, const Vec& theta,
                                          const std::string& method,
                                          const std::vector<double>& delta_grid,
                                          const DeltaScalingOptions& opts);
double run_delta_scaling(const BilevelProblem& p, const Vec& theta, const std::string& method,
                         const std::vector<double>& delta_grid, const DeltaScalingOptions& opts);

struct ConstantsOptions {
  int num_pairs = 40;  // < 10 raises RegionTooSmall
  std::uint64_t seed = 0;
  // The small end of the spectrum converges slowest; 200 keeps clustered
  // suite spectra within ~1e-5 of the dense eigensolve.
  int power_iters = 200;
  // Zero-injection calibration sweep used to fit C; empty = default grid.
  std::vector<double> calibration_betas;
  double equilibrium_tol = 1e-12;
};
// Measures every constant of the bound on one problem instance around the
// equilibrium at theta: mu / l_smooth from extremal Ritz values, B_in / B_out
// as the largest Lipschitz quotients of d_theta L_in / d_theta L_out over
// sampled point pairs within the given radius, rho from second-derivative
// quotients, and C fitted so the bound dominates a zero-injection beta sweep.
BoundConstants estimate_constants(const BilevelProblem& p, const Vec& theta, double radius,
                                  const ConstantsOptions& opts = {});

// Enlarges base.c (never shrinks it) until eval_ep_bound dominates every ok
// record in the list; failed records are ignored.
BoundConstants fit_bound_constant(BoundConstants base, const std::vector<SweepRecord>& records);

// CSV with the fixed header method,beta,delta,delta_prime,seed,grad_error,
// bound_value,status; floats at 17 significant digits, absent bound values as
// empty fields, inf spelled "inf" so failed rows round-trip too.
std::string sweep_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_sweep_csv(const std::string& text);
void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records);

// Runs fn(i) for i in [0, n) on the given number of threads with a static
// stripe split; fn must only touch slot i of shared state. Serial when
// threads <= 1. The first exception (if any) is rethrown after all workers
// join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace bilevel
