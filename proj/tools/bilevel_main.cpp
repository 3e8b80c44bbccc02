// Command-line front end: wires JSON run configs to the problem suite, the
// gradient estimators, the outer training loop, and the error-bound
// experiments. Exit codes: 0 success, 2 bad config/flags, 3 numerical failure.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilevel/bounds.hpp"
#include "bilevel/gradcheck.hpp"
#include "bilevel/jsonutil.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/runconfig.hpp"
#include "bilevel/stencil.hpp"
#include "bilevel/trainer.hpp"

namespace fs = std::filesystem;
using bilevel::ErrorKind;
using bilevel::fail;
using nlohmann::json;

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, "config file '" + path + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::config, "cannot open output file '" + path.string() + "'");
  out << content;
  if (!out) fail(ErrorKind::config, "write to '" + path.string() + "' failed");
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::config, "cannot create output dir '" + dir + "': " + ec.message());
  return fs::path(dir);
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo)) fail(ErrorKind::config, "log grid needs 0 < min <= max");
  if (n < 2) fail(ErrorKind::config, "log grid needs >= 2 points");
  std::vector<double> g(n);
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (int i = 0; i < n; ++i)
    g[i] = std::pow(10.0, llo + (lhi - llo) * double(i) / double(n - 1));
  return g;
}

json estimate_json(const bilevel::HypergradEstimate& est, const bilevel::InnerSolveReport& rep) {
  json e;
  e["method"] = est.method;
  e["grad"] = est.grad.raw();
  e["phase2_iters"] = est.phase2_iters;
  e["hvp_count"] = est.hvp_count;
  e["inner_solve_count"] = est.inner_solve_count;
  if (est.beta) e["beta"] = *est.beta;
  if (est.residual) e["residual"] = *est.residual;
  json inner;
  inner["iters"] = rep.iters;
  inner["final_grad_norm"] = rep.final_grad_norm;
  inner["converged"] = rep.converged;
  e["inner"] = inner;
  return e;
}

// ---- estimate ----------------------------------------------------------

struct EstimateArgs {
  std::string config_path, out_dir, problem = "p1", method = "oracle", kind = "forward";
  std::vector<double> theta;
  std::uint64_t problem_seed = 0;
  bool problem_seed_set = false;
  double beta = 0.01, tol = 1e-12, grad_tol = 1e-12, alpha = 0.0;
  bool alpha_set = false, allow_negative_beta = false;
  int points = 2, max_iters = 1000;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void run_estimate(const EstimateArgs& a) {
  bilevel::RunConfig cfg;
  if (!a.config_path.empty()) {
    cfg = bilevel::parse_run_config(read_json_file(a.config_path));
  } else {
    json p;
    p["name"] = a.problem;
    if (!a.theta.empty())
      p["theta0"] = a.theta.size() == 1 ? json(a.theta[0]) : json(a.theta);
    if (a.problem_seed_set) p["seed"] = a.problem_seed;
    cfg.problem = std::move(p);
    cfg.solver.grad_tol = a.grad_tol;
    cfg.estimator.method = a.method;
    if (a.alpha_set) cfg.estimator.alpha = a.alpha;
    cfg.estimator.max_iters = a.max_iters;
    cfg.estimator.tol = a.tol;
    cfg.estimator.ep.points = a.points;
    cfg.estimator.ep.kind = a.kind;
    cfg.estimator.ep.beta = a.beta;
    cfg.estimator.ep.allow_negative_beta = a.allow_negative_beta;
  }
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;

  bilevel::ProblemInstance inst = bilevel::make_problem(cfg.problem);
  if (inst.is_meta())
    fail(ErrorKind::config,
         "estimate: meta problems have no single fixed objective; use the train subcommand");
  const bilevel::Vec theta = inst.theta0;
  bilevel::InnerSolveReport rep = bilevel::minimize_inner(
      *inst.problem, theta, bilevel::Vec::zeros(inst.problem->phi_dim()), cfg.solver);
  bilevel::HypergradEstimate est =
      bilevel::run_estimator(*inst.problem, rep.phi_hat, theta, cfg.estimator, cfg.solver);
  const std::string out = estimate_json(est, rep).dump(2) + "\n";
  std::cout << out;
  if (!a.out_dir.empty()) write_text(prepare_out_dir(a.out_dir) / "estimate.json", out);
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void run_train(const TrainArgs& a) {
  bilevel::RunConfig cfg = bilevel::parse_run_config(read_json_file(a.config_path));
  if (a.seed_set) cfg.seed = a.seed;
  if (a.threads > 0) cfg.threads = a.threads;
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;

  bilevel::TrajectoryLog log = bilevel::run_bilevel(cfg);
  const fs::path dir = prepare_out_dir(cfg.output_dir);
  write_text(dir / "trajectory.csv", bilevel::trajectory_csv(log));
  write_text(dir / "final_state.json", bilevel::final_state_json(cfg, log).dump(2) + "\n");
  std::cout << "wrote " << (dir / "trajectory.csv").string() << "\n"
            << "wrote " << (dir / "final_state.json").string() << "\n";
  if (log.failed) fail(*log.failure_kind, log.failure_message);
  std::cout << "final_outer_loss=" << fmt(log.final_outer_loss) << "\n";
}

// ---- sweep-beta --------------------------------------------------------

struct SweepArgs {
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void run_sweep_beta(const SweepArgs& a) {
  const json j = read_json_file(a.config_path);
  bilevel::jsonutil::reject_unknown_keys(j, "config",
                                         {"problem", "sweep", "seed", "threads", "output_dir"});
  if (!j.contains("problem")) fail(ErrorKind::config, "missing key config.problem");
  using bilevel::jsonutil::get_or;
  std::uint64_t seed = get_or<std::uint64_t>(j, "config", "seed", 0);
  int threads = get_or<int>(j, "config", "threads", 1);
  std::string output_dir = get_or<std::string>(j, "config", "output_dir", ".");
  if (a.seed_set) seed = a.seed;
  if (a.threads > 0) threads = a.threads;
  if (!a.out_dir.empty()) output_dir = a.out_dir;

  double beta_min = 1e-4, beta_max = 1.0, bounds_radius = 0.1;
  int beta_points = 25, num_seeds = 20;
  bilevel::BetaSweepOptions opts;
  bool estimate_bounds = false;
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    bilevel::jsonutil::reject_unknown_keys(
        s, "config.sweep",
        {"beta_min", "beta_max", "beta_points", "delta", "delta_prime", "num_seeds",
         "estimate_bounds", "bounds_radius", "natural_phase2", "natural_tol", "equilibrium_tol",
         "max_iters"});
    beta_min = get_or<double>(s, "config.sweep", "beta_min", beta_min);
    beta_max = get_or<double>(s, "config.sweep", "beta_max", beta_max);
    beta_points = get_or<int>(s, "config.sweep", "beta_points", beta_points);
    num_seeds = get_or<int>(s, "config.sweep", "num_seeds", num_seeds);
    opts.delta = get_or<double>(s, "config.sweep", "delta", opts.delta);
    opts.delta_prime = get_or<double>(s, "config.sweep", "delta_prime", opts.delta_prime);
    estimate_bounds = get_or<bool>(s, "config.sweep", "estimate_bounds", estimate_bounds);
    bounds_radius = get_or<double>(s, "config.sweep", "bounds_radius", bounds_radius);
    opts.natural_phase2 = get_or<bool>(s, "config.sweep", "natural_phase2", opts.natural_phase2);
    opts.natural_tol = get_or<double>(s, "config.sweep", "natural_tol", opts.natural_tol);
    opts.equilibrium_tol =
        get_or<double>(s, "config.sweep", "equilibrium_tol", opts.equilibrium_tol);
    opts.max_iters = get_or<int>(s, "config.sweep", "max_iters", opts.max_iters);
  }
  if (num_seeds < 1) fail(ErrorKind::config, "config.sweep.num_seeds: must be >= 1");
  opts.beta_grid = log_grid(beta_min, beta_max, beta_points);
  opts.threads = threads;
  opts.seeds.clear();
  for (int i = 0; i < num_seeds; ++i) opts.seeds.push_back(seed + std::uint64_t(i));

  bilevel::ProblemInstance inst = bilevel::make_problem(j.at("problem"));
  if (inst.is_meta()) fail(ErrorKind::config, "sweep-beta: needs a fixed (non-meta) problem");
  if (estimate_bounds) {
    bilevel::ConstantsOptions copts;
    copts.seed = seed;
    copts.equilibrium_tol = opts.equilibrium_tol;
    opts.constants = bilevel::estimate_constants(*inst.problem, inst.theta0, bounds_radius, copts);
  }
  std::vector<bilevel::SweepRecord> records =
      bilevel::run_beta_sweep(*inst.problem, inst.theta0, opts);

  const fs::path dir = prepare_out_dir(output_dir);
  bilevel::write_sweep_csv((dir / "sweep.csv").string(), records);
  json meta;
  meta["problem"] = bilevel::materialize_problem_config(j.at("problem"));
  json s;
  s["beta_min"] = beta_min;
  s["beta_max"] = beta_max;
  s["beta_points"] = beta_points;
  s["delta"] = opts.delta;
  s["delta_prime"] = opts.delta_prime;
  s["num_seeds"] = num_seeds;
  s["estimate_bounds"] = estimate_bounds;
  s["bounds_radius"] = bounds_radius;
  s["natural_phase2"] = opts.natural_phase2;
  s["natural_tol"] = opts.natural_tol;
  s["equilibrium_tol"] = opts.equilibrium_tol;
  s["max_iters"] = opts.max_iters;
  meta["sweep"] = std::move(s);
  meta["seed"] = seed;
  meta["threads"] = threads;
  meta["output_dir"] = output_dir;
  if (opts.constants) {
    json k;
    k["b_in"] = opts.constants->b_in;
    k["b_out"] = opts.constants->b_out;
    k["c"] = opts.constants->c;
    k["mu"] = opts.constants->mu;
    k["rho"] = opts.constants->rho;
    k["l_smooth"] = opts.constants->l_smooth;
    meta["constants"] = std::move(k);
  }
  write_text(dir / "sweep_config.json", meta.dump(2) + "\n");
  std::cout << "wrote " << (dir / "sweep.csv").string() << "\n"
            << "wrote " << (dir / "sweep_config.json").string() << "\n";
}

// ---- delta-scaling -----------------------------------------------------

void run_delta_scaling_cmd(const SweepArgs& a) {
  const json j = read_json_file(a.config_path);
  bilevel::jsonutil::reject_unknown_keys(j, "config",
                                         {"problem", "scaling", "seed", "threads", "output_dir"});
  if (!j.contains("problem")) fail(ErrorKind::config, "missing key config.problem");
  using bilevel::jsonutil::get_or;
  std::uint64_t seed = get_or<std::uint64_t>(j, "config", "seed", 0);
  int threads = get_or<int>(j, "config", "threads", 1);
  std::string output_dir = get_or<std::string>(j, "config", "output_dir", ".");
  if (a.seed_set) seed = a.seed;
  if (a.threads > 0) threads = a.threads;
  if (!a.out_dir.empty()) output_dir = a.out_dir;

  std::string method = "cg";
  double delta_min = 1e-6, delta_max = 1e-2;
  int delta_points = 9;
  bilevel::DeltaScalingOptions opts;
  if (j.contains("scaling")) {
    const json& s = j.at("scaling");
    bilevel::jsonutil::reject_unknown_keys(
        s, "config.scaling",
        {"method", "delta_min", "delta_max", "delta_points", "num_seeds", "phase2_tol",
         "equilibrium_tol", "max_iters", "ep_beta_grid"});
    method = get_or<std::string>(s, "config.scaling", "method", method);
    delta_min = get_or<double>(s, "config.scaling", "delta_min", delta_min);
    delta_max = get_or<double>(s, "config.scaling", "delta_max", delta_max);
    delta_points = get_or<int>(s, "config.scaling", "delta_points", delta_points);
    opts.num_seeds = get_or<int>(s, "config.scaling", "num_seeds", opts.num_seeds);
    opts.phase2_tol = get_or<double>(s, "config.scaling", "phase2_tol", opts.phase2_tol);
    opts.equilibrium_tol =
        get_or<double>(s, "config.scaling", "equilibrium_tol", opts.equilibrium_tol);
    opts.max_iters = get_or<int>(s, "config.scaling", "max_iters", opts.max_iters);
    opts.ep_beta_grid =
        get_or<std::vector<double>>(s, "config.scaling", "ep_beta_grid", opts.ep_beta_grid);
  }
  opts.seed = seed;
  opts.threads = threads;

  bilevel::ProblemInstance inst = bilevel::make_problem(j.at("problem"));
  if (inst.is_meta()) fail(ErrorKind::config, "delta-scaling: needs a fixed (non-meta) problem");
  bilevel::DeltaScalingResult res = bilevel::run_delta_scaling_full(
      *inst.problem, inst.theta0, method, log_grid(delta_min, delta_max, delta_points), opts);

  const fs::path dir = prepare_out_dir(output_dir);
  bilevel::write_sweep_csv((dir / "delta_scaling.csv").string(), res.records);
  json out;
  out["problem"] = bilevel::materialize_problem_config(j.at("problem"));
  json s;
  s["method"] = method;
  s["delta_min"] = delta_min;
  s["delta_max"] = delta_max;
  s["delta_points"] = delta_points;
  s["num_seeds"] = opts.num_seeds;
  s["phase2_tol"] = opts.phase2_tol;
  s["equilibrium_tol"] = opts.equilibrium_tol;
  s["max_iters"] = opts.max_iters;
  s["ep_beta_grid"] = opts.ep_beta_grid;
  out["scaling"] = std::move(s);
  out["seed"] = seed;
  out["threads"] = threads;
  out["output_dir"] = output_dir;
  out["slope"] = res.slope;
  write_text(dir / "delta_scaling.json", out.dump(2) + "\n");
  std::cout << "slope=" << fmt(res.slope) << "\n"
            << "wrote " << (dir / "delta_scaling.csv").string() << "\n"
            << "wrote " << (dir / "delta_scaling.json").string() << "\n";
}

// ---- coeffs ------------------------------------------------------------

struct CoeffsArgs {
  int points = 0;
  std::string kind = "forward";
};

void run_coeffs(const CoeffsArgs& a) {
  const bilevel::StencilKind kind = bilevel::stencil_kind_from_string(a.kind);
  std::string line;
  if (kind == bilevel::StencilKind::forward && a.points > 8) {
    const bilevel::FDStencil s = bilevel::solve_fd_stencil(a.points, kind);
    for (std::size_t i = 0; i < s.coefficients.size(); ++i) {
      if (i) line += ' ';
      line += fmt(s.coefficients[i]);
    }
  } else {
    const std::vector<bilevel::Rational> cs = bilevel::exact_stencil_coefficients(a.points, kind);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (i) line += ' ';
      line += cs[i].to_string();
    }
  }
  std::cout << line << "\n";
}

// ---- check -------------------------------------------------------------

struct CheckArgs {
  std::string config_path, out_dir, problem = "quad";
  std::uint64_t seed = 0;
  double tol = 1e-5, h = 1e-5;
  int probes = 3;
};

int run_check(const CheckArgs& a) {
  json pj;
  if (!a.config_path.empty()) {
    const json j = read_json_file(a.config_path);
    bilevel::jsonutil::reject_unknown_keys(j, "config", {"problem"});
    if (!j.contains("problem")) fail(ErrorKind::config, "missing key config.problem");
    pj = j.at("problem");
  } else {
    pj["name"] = a.problem;
    if (a.problem != "p1") pj["seed"] = a.seed;
  }
  bilevel::ProblemInstance inst = bilevel::make_problem(pj);
  std::unique_ptr<bilevel::BilevelProblem> task;
  const bilevel::BilevelProblem* p = inst.problem.get();
  if (inst.is_meta()) {
    task = std::make_unique<bilevel::MetaRidgeTask>(inst.meta->sample_task(a.seed));
    p = task.get();
  }

  bilevel::Rng phi_rng(bilevel::Rng::derive(a.seed, 0xf1));
  bilevel::Rng th_rng(bilevel::Rng::derive(a.seed, 0x71));
  const bilevel::Vec phi = phi_rng.gaussian_vec(p->phi_dim(), 0.5);
  bilevel::Vec theta = inst.theta0;
  bilevel::axpy_into(theta, 1.0, th_rng.gaussian_vec(p->theta_dim(), 0.25));

  const bilevel::GradCheckReport rep = bilevel::check_gradients(*p, phi, theta, a.h, a.probes,
                                                                a.seed);
  const bool pass = rep.worst() <= a.tol;
  json out;
  out["grad_phi_inner"] = rep.grad_phi_inner;
  out["grad_theta_inner"] = rep.grad_theta_inner;
  out["grad_phi_outer"] = rep.grad_phi_outer;
  out["grad_theta_outer"] = rep.grad_theta_outer;
  out["hvp_inner"] = rep.hvp_inner;
  out["cross_vjp_inner"] = rep.cross_vjp_inner;
  out["max_rel_error"] = rep.worst();
  out["tol"] = a.tol;
  out["pass"] = pass;
  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!a.out_dir.empty()) write_text(prepare_out_dir(a.out_dir) / "check.json", text);
  if (!pass) {
    std::cerr << "check: max relative error " << fmt(rep.worst()) << " exceeds tolerance "
              << fmt(a.tol) << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outer-gradient estimation for bilevel problems: implicit-differentiation and "
               "nudged-equilibrium estimators, training loop, and error-bound experiments"};
  app.require_subcommand(1);
  int exit_code = 0;

  EstimateArgs est;
  CLI::App* c_est = app.add_subcommand("estimate", "Estimate the outer gradient once");
  c_est->add_option("--config", est.config_path, "JSON run config (overrides the quick flags)");
  c_est->add_option("--problem", est.problem, "Problem name: p1|quad|ridge|pcnet");
  c_est->add_option("--theta", est.theta, "Outer parameters (scalar broadcasts)");
  auto* est_pseed = c_est->add_option("--problem-seed", est.problem_seed,
                                      "Instance seed for generated problems");
  c_est->add_option("--method", est.method, "oracle|first_order|identity|rbp|cg|ep");
  c_est->add_option("--beta", est.beta, "EP nudge step");
  c_est->add_option("--points", est.points, "EP stencil points");
  c_est->add_option("--kind", est.kind, "EP stencil kind: forward|symmetric");
  c_est->add_flag("--allow-negative-beta", est.allow_negative_beta,
                  "Permit the negative nudge of symmetric stencils");
  auto* est_alpha = c_est->add_option("--alpha", est.alpha, "Fixed-point step for rbp");
  c_est->add_option("--max-iters", est.max_iters, "Phase-2 iteration cap (rbp/cg)");
  c_est->add_option("--tol", est.tol, "Phase-2 stopping tolerance (rbp/cg)");
  c_est->add_option("--grad-tol", est.grad_tol, "Inner solve tolerance");
  auto* est_seed = c_est->add_option("--seed", est.seed, "Master seed override");
  c_est->add_option("--out", est.out_dir, "Also write estimate.json here");
  c_est->callback([&] {
    est.alpha_set = est_alpha->count() > 0;
    est.seed_set = est_seed->count() > 0;
    est.problem_seed_set = est_pseed->count() > 0;
    run_estimate(est);
  });

  TrainArgs train;
  CLI::App* c_train = app.add_subcommand("train", "Run the outer training loop");
  c_train->add_option("--config", train.config_path, "JSON run config")->required();
  auto* train_seed = c_train->add_option("--seed", train.seed, "Master seed override");
  c_train->add_option("--threads", train.threads, "Worker thread override");
  c_train->add_option("--out", train.out_dir, "Output directory override");
  c_train->callback([&] {
    train.seed_set = train_seed->count() > 0;
    run_train(train);
  });

  SweepArgs sweep;
  CLI::App* c_sweep = app.add_subcommand("sweep-beta", "Error vs nudge step grid");
  c_sweep->add_option("--config", sweep.config_path, "JSON sweep config")->required();
  auto* sweep_seed = c_sweep->add_option("--seed", sweep.seed, "Master seed override");
  c_sweep->add_option("--threads", sweep.threads, "Worker thread override");
  c_sweep->add_option("--out", sweep.out_dir, "Output directory override");
  c_sweep->callback([&] {
    sweep.seed_set = sweep_seed->count() > 0;
    run_sweep_beta(sweep);
  });

  SweepArgs scaling;
  CLI::App* c_scaling = app.add_subcommand("delta-scaling", "Error vs injected-error slope");
  c_scaling->add_option("--config", scaling.config_path, "JSON scaling config")->required();
  auto* scaling_seed = c_scaling->add_option("--seed", scaling.seed, "Master seed override");
  c_scaling->add_option("--threads", scaling.threads, "Worker thread override");
  c_scaling->add_option("--out", scaling.out_dir, "Output directory override");
  c_scaling->callback([&] {
    scaling.seed_set = scaling_seed->count() > 0;
    run_delta_scaling_cmd(scaling);
  });

  CoeffsArgs coeffs;
  CLI::App* c_coeffs = app.add_subcommand("coeffs", "Print stencil coefficients");
  c_coeffs->add_option("--points", coeffs.points, "Stencil point count")->required();
  c_coeffs->add_option("--kind", coeffs.kind, "forward|symmetric");
  c_coeffs->callback([&] { run_coeffs(coeffs); });

  CheckArgs check;
  CLI::App* c_check = app.add_subcommand("check", "Verify analytic derivatives against FD");
  c_check->add_option("--config", check.config_path, "JSON config with a problem block");
  c_check->add_option("--problem", check.problem, "Problem name: p1|quad|ridge|meta_ridge|pcnet");
  c_check->add_option("--seed", check.seed, "Instance + probe seed");
  c_check->add_option("--tol", check.tol, "Max acceptable relative error");
  c_check->add_option("--fd-step", check.h, "Finite-difference step");
  c_check->add_option("--probes", check.probes, "Random probe vectors for second derivatives");
  c_check->add_option("--out", check.out_dir, "Also write check.json here");
  c_check->callback([&] { exit_code = run_check(check); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const bilevel::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bilevel::exit_code_for(e.kind());
  }
  return exit_code;
}
