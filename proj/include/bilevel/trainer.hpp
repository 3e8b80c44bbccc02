#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/runconfig.hpp"

namespace bilevel {

struct TrajectoryPoint {
  int step = 0;
  double outer_loss = 0.0;
  double grad_norm = 0.0;
  int inner_iters = 0;    // phase-1 work this step (summed over tasks)
  int phase2_iters = 0;   // estimator iterations / nudged-phase work
  int hvp_count = 0;
};

struct TrajectoryLog {
  std::vector<TrajectoryPoint> points;
  Vec final_theta;
  double final_outer_loss = 0.0;
  bool failed = false;
  int failure_step = -1;
  std::string failure_message;
  std::optional<ErrorKind> failure_kind;
};

// The outer loop: solve the inner problem (warm-started from the previous
// equilibrium when enabled), estimate the outer gradient, take a plain
// gradient step, repeat. Meta problems instead sample tasks_per_step tasks
// each step (task seed = derive(seed, step * K + t)), solve each from a cold
// start, and average the per-task gradients and losses. Numerical failures
// mark the log failed at the offending step and stop; they do not throw.
TrajectoryLog run_bilevel(const RunConfig& cfg);

// Fixed header step,outer_loss,grad_norm,inner_iters,phase2_iters,hvp_count;
// floats at 17 significant digits.
std::string trajectory_csv(const TrajectoryLog& log);
void write_trajectory_csv(const std::string& path, const TrajectoryLog& log);

// Final theta / loss / failure state plus the fully materialized config that
// produced them.
nlohmann::json final_state_json(const RunConfig& cfg, const TrajectoryLog& log);

}  // namespace bilevel
