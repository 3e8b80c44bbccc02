#include "bilevel/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "bilevel/rng.hpp"

namespace bilevel {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Gradient estimate + bookkeeping for one outer step at fixed theta.
struct StepResult {
  Vec grad;
  double outer_loss = 0.0;
  int inner_iters = 0;
  int phase2_iters = 0;
  int hvp_count = 0;
};

StepResult fixed_problem_step(const BilevelProblem& p, const Vec& theta, Vec& warm,
                              bool use_warm, const RunConfig& cfg) {
  const Vec start = use_warm ? warm : Vec::zeros(p.phi_dim());
  InnerSolveReport rep = minimize_inner(p, theta, start, cfg.solver);
  warm = rep.phi_hat;
  HypergradEstimate est = run_estimator(p, rep.phi_hat, theta, cfg.estimator, cfg.solver);
  StepResult out{std::move(est.grad), p.outer_loss(rep.phi_hat, theta), rep.iters,
                 est.phase2_iters, est.hvp_count};
  return out;
}

StepResult meta_step(const MetaRidge& meta, const Vec& theta, int step, const RunConfig& cfg) {
  const int k = cfg.outer.tasks_per_step;
  StepResult out{Vec::zeros(theta.size()), 0.0, 0, 0, 0};
  for (int t = 0; t < k; ++t) {
    const std::uint64_t task_seed =
        Rng::derive(cfg.seed, std::uint64_t(step) * std::uint64_t(k) + std::uint64_t(t));
    MetaRidgeTask task = meta.sample_task(task_seed);
    InnerSolveReport rep = minimize_inner(task, theta, Vec::zeros(task.phi_dim()), cfg.solver);
    HypergradEstimate est = run_estimator(task, rep.phi_hat, theta, cfg.estimator, cfg.solver);
    axpy_into(out.grad, 1.0 / double(k), est.grad);
    out.outer_loss += task.outer_loss(rep.phi_hat, theta) / double(k);
    out.inner_iters += rep.iters;
    out.phase2_iters += est.phase2_iters;
    out.hvp_count += est.hvp_count;
  }
  return out;
}

}  // namespace

TrajectoryLog run_bilevel(const RunConfig& cfg) {
  ProblemInstance inst = make_problem(cfg.problem);
  TrajectoryLog log;
  Vec theta = inst.theta0;
  Vec warm = inst.is_meta() ? Vec() : Vec::zeros(inst.problem->phi_dim());

  for (int step = 0; step < cfg.outer.outer_steps; ++step) {
    try {
      StepResult res =
          inst.is_meta()
              ? meta_step(*inst.meta, theta, step, cfg)
              : fixed_problem_step(*inst.problem, theta, warm,
                                   cfg.outer.warm_start && step > 0, cfg);
      const double gn = norm(res.grad);
      log.points.push_back(
          {step, res.outer_loss, gn, res.inner_iters, res.phase2_iters, res.hvp_count});
      axpy_into(theta, -cfg.outer.outer_lr, res.grad);
      require_finite(theta, "run_bilevel: theta");
    } catch (const Error& e) {
      log.failed = true;
      log.failure_step = step;
      log.failure_message = "outer step " + std::to_string(step) + ": " + e.what();
      log.failure_kind = e.kind();
      break;
    }
  }

  log.final_theta = theta;
  if (!log.failed) {
    try {
      if (inst.is_meta()) {
        log.final_outer_loss = meta_step(*inst.meta, theta, cfg.outer.outer_steps, cfg).outer_loss;
      } else {
        const Vec start = cfg.outer.warm_start && cfg.outer.outer_steps > 0
                              ? warm
                              : Vec::zeros(inst.problem->phi_dim());
        InnerSolveReport rep = minimize_inner(*inst.problem, theta, start, cfg.solver);
        log.final_outer_loss = inst.problem->outer_loss(rep.phi_hat, theta);
      }
    } catch (const Error& e) {
      log.failed = true;
      log.failure_step = cfg.outer.outer_steps;
      log.failure_message = std::string("final evaluation: ") + e.what();
      log.failure_kind = e.kind();
    }
  }
  return log;
}

std::string trajectory_csv(const TrajectoryLog& log) {
  std::string out = "step,outer_loss,grad_norm,inner_iters,phase2_iters,hvp_count\n";
  for (const TrajectoryPoint& p : log.points) {
    out += std::to_string(p.step);
    out += ',';
    out += fmt(p.outer_loss);
    out += ',';
    out += fmt(p.grad_norm);
    out += ',';
    out += std::to_string(p.inner_iters);
    out += ',';
    out += std::to_string(p.phase2_iters);
    out += ',';
    out += std::to_string(p.hvp_count);
    out += '\n';
  }
  return out;
}

void write_trajectory_csv(const std::string& path, const TrajectoryLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::config, "write_trajectory_csv: cannot open '" + path + "'");
  out << trajectory_csv(log);
  if (!out) fail(ErrorKind::config, "write_trajectory_csv: write to '" + path + "' failed");
}

nlohmann::json final_state_json(const RunConfig& cfg, const TrajectoryLog& log) {
  nlohmann::json j;
  j["config"] = materialize_run_config(cfg);
  j["steps_run"] = log.points.size();
  j["final_theta"] = log.final_theta.raw();
  j["failed"] = log.failed;
  if (log.failed) {
    j["failure_step"] = log.failure_step;
    j["failure_message"] = log.failure_message;
  } else {
    j["final_outer_loss"] = log.final_outer_loss;
  }
  return j;
}

}  // namespace bilevel
