#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "bilevel/hypergrad.hpp"
#include "bilevel/problem_factory.hpp"
#include "bilevel/solver.hpp"

namespace bilevel {

struct OuterLoopConfig {
  double outer_lr = 0.1;
  int outer_steps = 0;
  bool warm_start = true;   // reuse the previous step's equilibrium
  int tasks_per_step = 1;   // meta problems only
};

struct EpEstimatorConfig {
  int points = 2;
  std::string kind = "forward";  // or "symmetric"
  double beta = 0.01;
  bool allow_negative_beta = false;
  bool chain_warm_starts = true;
};

// method selects the branch; the scalar knobs below apply to the phase-2
// iterations of rbp/cg, the ep block to the nudged-phase estimator.
struct EstimatorConfig {
  std::string method = "oracle";       // oracle|first_order|identity|rbp|cg|ep
  std::optional<double> alpha;         // rbp step; unset = 1/(1.05 L) per call
  int max_iters = 1000;
  double tol = 1e-12;
  EpEstimatorConfig ep;
};

// One training / estimation run, fully determined by this struct plus the
// binary. Parsing is strict: unknown keys anywhere are rejected with their
// path, and every default is materialized back out for provenance.
struct RunConfig {
  nlohmann::json problem;  // handed to make_problem
  SolverConfig solver;
  EstimatorConfig estimator;
  OuterLoopConfig outer;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_dir = ".";
};

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json materialize_run_config(const RunConfig& cfg);

SolverConfig parse_solver_config(const nlohmann::json& j, const std::string& path);
nlohmann::json materialize_solver_config(const SolverConfig& cfg);
EstimatorConfig parse_estimator_config(const nlohmann::json& j, const std::string& path);
nlohmann::json materialize_estimator_config(const EstimatorConfig& cfg);

// Runs the configured estimator at an already-solved equilibrium. The solver
// config is only consulted by the ep branch (its nudged phases re-solve).
HypergradEstimate run_estimator(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                                const EstimatorConfig& est, const SolverConfig& solver);

}  // namespace bilevel
