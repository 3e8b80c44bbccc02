#include "bilevel/runconfig.hpp"

#include "bilevel/jsonutil.hpp"
#include "bilevel/stencil.hpp"

namespace bilevel {

using jsonutil::get_or;
using jsonutil::reject_unknown_keys;
using nlohmann::json;

SolverConfig parse_solver_config(const json& j, const std::string& path) {
  reject_unknown_keys(j, path,
                      {"method", "step_size", "momentum", "grad_tol", "max_iters", "power_iters"});
  SolverConfig cfg;
  const std::string method = get_or<std::string>(j, path, "method", "gd");
  if (method == "gd")
    cfg.method = InnerMethod::gd;
  else if (method == "heavy_ball")
    cfg.method = InnerMethod::heavy_ball;
  else
    fail(ErrorKind::config, path + ".method: unknown method '" + method + "'");
  if (j.contains("step_size") && !j.at("step_size").is_null())
    cfg.step_size = get_or<double>(j, path, "step_size", 0.0);
  cfg.momentum = get_or<double>(j, path, "momentum", cfg.momentum);
  cfg.grad_tol = get_or<double>(j, path, "grad_tol", cfg.grad_tol);
  cfg.max_iters = get_or<int>(j, path, "max_iters", cfg.max_iters);
  cfg.power_iters = get_or<int>(j, path, "power_iters", cfg.power_iters);
  if (cfg.step_size && !(*cfg.step_size > 0.0))
    fail(ErrorKind::config, path + ".step_size: must be > 0");
  if (!(cfg.grad_tol > 0.0)) fail(ErrorKind::config, path + ".grad_tol: must be > 0");
  if (cfg.max_iters < 0) fail(ErrorKind::config, path + ".max_iters: must be >= 0");
  if (cfg.power_iters < 1) fail(ErrorKind::config, path + ".power_iters: must be >= 1");
  return cfg;
}

json materialize_solver_config(const SolverConfig& cfg) {
  json j;
  j["method"] = cfg.method == InnerMethod::gd ? "gd" : "heavy_ball";
  j["step_size"] = cfg.step_size ? json(*cfg.step_size) : json(nullptr);
  j["momentum"] = cfg.momentum;
  j["grad_tol"] = cfg.grad_tol;
  j["max_iters"] = cfg.max_iters;
  j["power_iters"] = cfg.power_iters;
  return j;
}

EstimatorConfig parse_estimator_config(const json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"method", "alpha", "max_iters", "tol", "ep"});
  EstimatorConfig cfg;
  cfg.method = get_or<std::string>(j, path, "method", cfg.method);
  if (cfg.method != "oracle" && cfg.method != "first_order" && cfg.method != "identity" &&
      cfg.method != "rbp" && cfg.method != "cg" && cfg.method != "ep")
    fail(ErrorKind::config, path + ".method: unknown method '" + cfg.method +
                                "' (want oracle|first_order|identity|rbp|cg|ep)");
  if (j.contains("alpha") && !j.at("alpha").is_null()) {
    cfg.alpha = get_or<double>(j, path, "alpha", 0.0);
    if (!(*cfg.alpha > 0.0)) fail(ErrorKind::config, path + ".alpha: must be > 0");
  }
  cfg.max_iters = get_or<int>(j, path, "max_iters", cfg.max_iters);
  cfg.tol = get_or<double>(j, path, "tol", cfg.tol);
  if (cfg.max_iters < 0) fail(ErrorKind::config, path + ".max_iters: must be >= 0");
  if (cfg.tol < 0.0) fail(ErrorKind::config, path + ".tol: must be >= 0");
  if (j.contains("ep")) {
    const json& ep = j.at("ep");
    const std::string ep_path = path + ".ep";
    reject_unknown_keys(ep, ep_path,
                        {"points", "kind", "beta", "allow_negative_beta", "chain_warm_starts"});
    cfg.ep.points = get_or<int>(ep, ep_path, "points", cfg.ep.points);
    cfg.ep.kind = get_or<std::string>(ep, ep_path, "kind", cfg.ep.kind);
    stencil_kind_from_string(cfg.ep.kind);  // validates; throws UnsupportedStencil
    cfg.ep.beta = get_or<double>(ep, ep_path, "beta", cfg.ep.beta);
    cfg.ep.allow_negative_beta =
        get_or<bool>(ep, ep_path, "allow_negative_beta", cfg.ep.allow_negative_beta);
    cfg.ep.chain_warm_starts =
        get_or<bool>(ep, ep_path, "chain_warm_starts", cfg.ep.chain_warm_starts);
    if (!(cfg.ep.beta > 0.0)) fail(ErrorKind::config, ep_path + ".beta: must be > 0");
  }
  return cfg;
}

json materialize_estimator_config(const EstimatorConfig& cfg) {
  json j;
  j["method"] = cfg.method;
  j["alpha"] = cfg.alpha ? json(*cfg.alpha) : json(nullptr);
  j["max_iters"] = cfg.max_iters;
  j["tol"] = cfg.tol;
  json ep;
  ep["points"] = cfg.ep.points;
  ep["kind"] = cfg.ep.kind;
  ep["beta"] = cfg.ep.beta;
  ep["allow_negative_beta"] = cfg.ep.allow_negative_beta;
  ep["chain_warm_starts"] = cfg.ep.chain_warm_starts;
  j["ep"] = std::move(ep);
  return j;
}

RunConfig parse_run_config(const json& j) {
  reject_unknown_keys(
      j, "config", {"problem", "solver", "estimator", "outer", "seed", "threads", "output_dir"});
  RunConfig cfg;
  if (!j.contains("problem")) fail(ErrorKind::config, "missing key config.problem");
  cfg.problem = j.at("problem");
  if (j.contains("solver")) cfg.solver = parse_solver_config(j.at("solver"), "config.solver");
  if (j.contains("estimator"))
    cfg.estimator = parse_estimator_config(j.at("estimator"), "config.estimator");
  if (j.contains("outer")) {
    const json& o = j.at("outer");
    reject_unknown_keys(o, "config.outer",
                        {"outer_lr", "outer_steps", "warm_start", "tasks_per_step"});
    cfg.outer.outer_lr = get_or<double>(o, "config.outer", "outer_lr", cfg.outer.outer_lr);
    cfg.outer.outer_steps = get_or<int>(o, "config.outer", "outer_steps", cfg.outer.outer_steps);
    cfg.outer.warm_start = get_or<bool>(o, "config.outer", "warm_start", cfg.outer.warm_start);
    cfg.outer.tasks_per_step =
        get_or<int>(o, "config.outer", "tasks_per_step", cfg.outer.tasks_per_step);
    if (!(cfg.outer.outer_lr > 0.0)) fail(ErrorKind::config, "config.outer.outer_lr: must be > 0");
    if (cfg.outer.outer_steps < 0)
      fail(ErrorKind::config, "config.outer.outer_steps: must be >= 0");
    if (cfg.outer.tasks_per_step < 1)
      fail(ErrorKind::config, "config.outer.tasks_per_step: must be >= 1");
  }
  cfg.seed = get_or<std::uint64_t>(j, "config", "seed", cfg.seed);
  cfg.threads = get_or<int>(j, "config", "threads", cfg.threads);
  if (cfg.threads < 1) fail(ErrorKind::config, "config.threads: must be >= 1");
  cfg.output_dir = get_or<std::string>(j, "config", "output_dir", cfg.output_dir);
  return cfg;
}

json materialize_run_config(const RunConfig& cfg) {
  json j;
  j["problem"] = materialize_problem_config(cfg.problem);
  j["solver"] = materialize_solver_config(cfg.solver);
  j["estimator"] = materialize_estimator_config(cfg.estimator);
  json outer;
  outer["outer_lr"] = cfg.outer.outer_lr;
  outer["outer_steps"] = cfg.outer.outer_steps;
  outer["warm_start"] = cfg.outer.warm_start;
  outer["tasks_per_step"] = cfg.outer.tasks_per_step;
  j["outer"] = std::move(outer);
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["output_dir"] = cfg.output_dir;
  return j;
}

HypergradEstimate run_estimator(const BilevelProblem& p, const Vec& phi_hat, const Vec& theta,
                                const EstimatorConfig& est, const SolverConfig& solver) {
  if (est.method == "oracle") return oracle_exact(p, phi_hat, theta);
  if (est.method == "first_order") return first_order(p, phi_hat, theta);
  if (est.method == "identity") return one_step_identity(p, phi_hat, theta);
  if (est.method == "rbp") {
    const double alpha =
        est.alpha ? *est.alpha : 1.0 / (1.05 * estimate_smoothness(p, phi_hat, theta));
    return rbp_neumann(p, phi_hat, theta, alpha, est.max_iters, est.tol);
  }
  if (est.method == "cg") return conjugate_gradient(p, phi_hat, theta, est.max_iters, est.tol);
  if (est.method == "ep") {
    FDStencil stencil = with_step(
        solve_fd_stencil(est.ep.points, stencil_kind_from_string(est.ep.kind)), est.ep.beta);
    EpOptions opts;
    opts.allow_negative_beta = est.ep.allow_negative_beta;
    opts.chain_warm_starts = est.ep.chain_warm_starts;
    return ep_estimate(p, theta, phi_hat, stencil, solver, opts);
  }
  fail(ErrorKind::config, "run_estimator: unknown method '" + est.method + "'");
}

}  // namespace bilevel
