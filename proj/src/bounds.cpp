#include "bilevel/bounds.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "bilevel/errors.hpp"
#include "bilevel/hypergrad.hpp"
#include "bilevel/numdiff.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

namespace {

constexpr double kPositiveFloor = 1e-12;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = std::pow(10.0, llo + (lhi - llo) * double(i) / double(n - 1));
  return g;
}

SolverConfig equilibrium_config(double tol, int max_iters) {
  SolverConfig cfg;
  cfg.grad_tol = tol;
  cfg.max_iters = max_iters;
  return cfg;
}

// Shared preamble of every experiment: the exact base equilibrium and the
// dense-oracle gradient it anchors all error measurements to.
struct ExactBase {
  Vec phi_star;
  Vec oracle;
};

ExactBase solve_base(const BilevelProblem& p, const Vec& theta, double tol, int max_iters) {
  const SolverConfig cfg = equilibrium_config(tol, max_iters);
  InnerSolveReport rep = minimize_inner(p, theta, Vec::zeros(p.phi_dim()), cfg);
  if (!rep.converged)
    fail(ErrorKind::diverged, "bounds: base equilibrium did not reach tol " + fmt(tol) + " in " +
                                  std::to_string(max_iters) + " iterations");
  Vec oracle = oracle_exact(p, rep.phi_hat, theta).grad;
  return {std::move(rep.phi_hat), std::move(oracle)};
}

}  // namespace

Vec inject_error(const Vec& phi_star, double delta, std::uint64_t seed) {
  if (delta < 0.0) fail(ErrorKind::non_positive_value, "inject_error: delta must be >= 0");
  if (delta == 0.0) return phi_star;
  Rng rng(seed);
  Vec u = rng.unit_vec(phi_star.size());
  return add(phi_star, scaled(u, delta));
}

double eval_ep_bound(const BoundConstants& k, double delta, double delta_prime, double beta) {
  if (!(beta > 0.0)) fail(ErrorKind::non_positive_beta, "eval_ep_bound: beta must be > 0");
  if (delta < 0.0 || delta_prime < 0.0)
    fail(ErrorKind::non_positive_value, "eval_ep_bound: deltas must be >= 0");
  return k.b_in * (delta + delta_prime) / beta + k.b_out * delta_prime + k.c * beta / (1.0 + beta);
}

OptimalBeta optimal_beta_bound(const BoundConstants& k, double delta, double delta_prime) {
  if (delta + delta_prime >= k.c / k.b_in)
    fail(ErrorKind::condition_violated,
         "optimal_beta_bound: needs delta + delta' < C/B_in = " + fmt(k.c / k.b_in));
  OptimalBeta best{0.0, std::numeric_limits<double>::infinity()};
  for (double beta : log_grid(1e-6, 1e3, 1000)) {
    const double b = eval_ep_bound(k, delta, delta_prime, beta);
    if (b < best.bound) best = {beta, b};
  }
  return best;
}

Vec ep_two_point(const BilevelProblem& p, const Vec& theta, const Vec& phi_hat0,
                 const Vec& phi_hat_beta, double beta) {
  if (!(beta > 0.0)) fail(ErrorKind::non_positive_beta, "ep_two_point: beta must be > 0");
  Vec grad = sub(p.grad_theta_inner(phi_hat_beta, theta), p.grad_theta_inner(phi_hat0, theta));
  grad = scaled(grad, 1.0 / beta);
  axpy_into(grad, 1.0, p.grad_theta_outer(phi_hat_beta, theta));
  return grad;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<SweepRecord> run_beta_sweep(const BilevelProblem& p, const Vec& theta,
                                        const BetaSweepOptions& opts) {
  if (opts.beta_grid.empty()) fail(ErrorKind::config, "run_beta_sweep: empty beta grid");
  if (opts.seeds.empty()) fail(ErrorKind::config, "run_beta_sweep: empty seed list");
  for (double b : opts.beta_grid)
    if (!(b > 0.0)) fail(ErrorKind::non_positive_beta, "run_beta_sweep: beta grid must be > 0");
  if (opts.delta < 0.0 || opts.delta_prime < 0.0)
    fail(ErrorKind::non_positive_value, "run_beta_sweep: deltas must be >= 0");

  const ExactBase base = solve_base(p, theta, opts.equilibrium_tol, opts.max_iters);
  const SolverConfig cfg = equilibrium_config(opts.equilibrium_tol, opts.max_iters);

  // Nudged equilibria are shared by every seed of a beta column, so solve them
  // up front (warm-started along the grid); a failed phase marks the whole
  // column failed instead of aborting the sweep.
  const std::size_t nb = opts.beta_grid.size(), ns = opts.seeds.size();
  std::vector<std::optional<Vec>> phi_beta(nb);
  std::vector<std::string> column_status(nb, "ok");
  {
    Vec warm = base.phi_star;
    for (std::size_t bi = 0; bi < nb; ++bi) {
      try {
        InnerSolveReport rep = minimize_augmented(p, theta, opts.beta_grid[bi], warm, cfg);
        if (!rep.converged)
          fail(ErrorKind::phase_diverged, "run_beta_sweep: nudged phase at beta " +
                                              fmt(opts.beta_grid[bi]) + " did not converge");
        warm = rep.phi_hat;
        phi_beta[bi] = std::move(rep.phi_hat);
      } catch (const Error& e) {
        column_status[bi] = std::string("failed:") + to_string(e.kind());
      }
    }
  }

  std::vector<SweepRecord> records(nb * ns);
  parallel_for(records.size(), opts.threads, [&](std::size_t cell) {
    const std::size_t bi = cell / ns, si = cell % ns;
    const double beta = opts.beta_grid[bi];
    const std::uint64_t seed = opts.seeds[si];
    SweepRecord& rec = records[cell];
    rec.method = "ep_two_point";
    rec.beta = beta;
    rec.delta_injected = opts.delta;
    rec.delta_prime_injected = opts.delta_prime;
    rec.seed = seed;
    if (column_status[bi] != "ok") {
      rec.grad_error = std::numeric_limits<double>::infinity();
      rec.status = column_status[bi];
      return;
    }
    try {
      const Vec phi0_hat = inject_error(base.phi_star, opts.delta, Rng::derive(seed, 2 * bi));
      Vec phib_hat;
      if (opts.natural_phase2) {
        SolverConfig natural = cfg;
        natural.grad_tol = opts.natural_tol;
        InnerSolveReport rep = minimize_augmented(p, theta, beta, phi0_hat, natural);
        if (!rep.converged)
          fail(ErrorKind::phase_diverged, "run_beta_sweep: natural phase-2 did not converge");
        phib_hat = std::move(rep.phi_hat);
        rec.delta_prime_injected = norm(sub(phib_hat, *phi_beta[bi]));
      } else {
        phib_hat = inject_error(*phi_beta[bi], opts.delta_prime, Rng::derive(seed, 2 * bi + 1));
      }
      rec.grad_error = norm(sub(ep_two_point(p, theta, phi0_hat, phib_hat, beta), base.oracle));
      if (opts.constants)
        rec.bound_value =
            eval_ep_bound(*opts.constants, rec.delta_injected, rec.delta_prime_injected, beta);
    } catch (const Error& e) {
      rec.grad_error = std::numeric_limits<double>::infinity();
      rec.bound_value.reset();
      rec.status = std::string("failed:") + to_string(e.kind());
    }
  });
  return records;
}

DeltaScalingResult run_delta_scaling_full(const BilevelProblem& p, const Vec& theta,
                                          const std::string& method,
                                          const std::vector<double>& delta_grid,
                                          const DeltaScalingOptions& opts) {
  if (method != "cg" && method != "rbp" && method != "ep_opt_beta")
    fail(ErrorKind::config, "run_delta_scaling: unknown method '" + method +
                                "' (expected cg, rbp, or ep_opt_beta)");
  if (delta_grid.size() < 3)
    fail(ErrorKind::insufficient_points, "run_delta_scaling: need >= 3 delta values");
  for (double d : delta_grid)
    if (!(d > 0.0))
      fail(ErrorKind::non_positive_value, "run_delta_scaling: deltas must be > 0 for a log fit");
  if (opts.num_seeds < 1) fail(ErrorKind::config, "run_delta_scaling: num_seeds must be >= 1");

  const ExactBase base = solve_base(p, theta, opts.equilibrium_tol, opts.max_iters);
  const SolverConfig cfg = equilibrium_config(opts.equilibrium_tol, opts.max_iters);
  const std::size_t nd = delta_grid.size(), ns = std::size_t(opts.num_seeds);

  DeltaScalingResult result;
  // Mean of ok cells only; a delta whose cells all failed drops out of the
  // fit (and the fit itself then raises InsufficientPoints if too little is
  // left).
  std::vector<std::pair<double, double>> pts;
  if (method == "ep_opt_beta") {
    const std::vector<double> betas =
        opts.ep_beta_grid.empty() ? log_grid(1e-4, 1.0, 13) : opts.ep_beta_grid;
    const std::size_t nb = betas.size();
    // Every delta reuses the same nudged equilibria, so solve the beta chain
    // once up front; a failed phase fails its column of cells, not the run.
    std::vector<std::optional<Vec>> phi_beta(nb);
    std::vector<std::string> column_status(nb, "ok");
    Vec warm = base.phi_star;
    for (std::size_t bi = 0; bi < nb; ++bi) {
      try {
        InnerSolveReport rep = minimize_augmented(p, theta, betas[bi], warm, cfg);
        if (!rep.converged)
          fail(ErrorKind::phase_diverged,
               "run_delta_scaling: nudged phase at beta " + fmt(betas[bi]) + " did not converge");
        warm = rep.phi_hat;
        phi_beta[bi] = std::move(rep.phi_hat);
      } catch (const Error& e) {
        column_status[bi] = std::string("failed:") + to_string(e.kind());
      }
    }
    result.records.resize(nd * nb * ns);
    parallel_for(result.records.size(), opts.threads, [&](std::size_t cell) {
      const std::size_t di = cell / (nb * ns), bi = (cell / ns) % nb;
      const double delta = delta_grid[di];
      SweepRecord& rec = result.records[cell];
      rec.method = "ep_opt_beta";
      rec.beta = betas[bi];
      rec.delta_injected = delta;
      rec.delta_prime_injected = delta;
      rec.seed = cell;
      if (column_status[bi] != "ok") {
        rec.grad_error = std::numeric_limits<double>::infinity();
        rec.status = column_status[bi];
        return;
      }
      try {
        const Vec phi0_hat = inject_error(base.phi_star, delta, Rng::derive(opts.seed, 2 * cell));
        const Vec phib_hat =
            inject_error(*phi_beta[bi], delta, Rng::derive(opts.seed, 2 * cell + 1));
        rec.grad_error =
            norm(sub(ep_two_point(p, theta, phi0_hat, phib_hat, betas[bi]), base.oracle));
      } catch (const Error& e) {
        rec.grad_error = std::numeric_limits<double>::infinity();
        rec.status = std::string("failed:") + to_string(e.kind());
      }
    });
    for (std::size_t di = 0; di < nd; ++di) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t bi = 0; bi < nb; ++bi) {
        double sum = 0.0;
        std::size_t ok = 0;
        for (std::size_t si = 0; si < ns; ++si) {
          const SweepRecord& rec = result.records[(di * nb + bi) * ns + si];
          if (!rec.ok()) continue;
          sum += rec.grad_error;
          ++ok;
        }
        if (ok > 0) best = std::min(best, sum / double(ok));
      }
      if (std::isfinite(best)) pts.emplace_back(delta_grid[di], best);
    }
  } else {
    result.records.resize(nd * ns);
    parallel_for(result.records.size(), opts.threads, [&](std::size_t cell) {
      const std::size_t di = cell / ns;
      SweepRecord& rec = result.records[cell];
      rec.method = method;
      rec.beta = 0.0;  // no nudge phase in the implicit-differentiation methods
      rec.delta_injected = delta_grid[di];
      rec.delta_prime_injected = 0.0;
      rec.seed = cell;
      try {
        const Vec phi_hat =
            inject_error(base.phi_star, delta_grid[di], Rng::derive(opts.seed, cell));
        HypergradEstimate est =
            method == "cg"
                ? conjugate_gradient(p, phi_hat, theta, opts.max_iters, opts.phase2_tol)
                : rbp_neumann(p, phi_hat, theta,
                              1.0 / (1.05 * estimate_smoothness(p, phi_hat, theta)),
                              opts.max_iters, opts.phase2_tol);
        rec.grad_error = norm(sub(est.grad, base.oracle));
      } catch (const Error& e) {
        rec.grad_error = std::numeric_limits<double>::infinity();
        rec.status = std::string("failed:") + to_string(e.kind());
      }
    });
    for (std::size_t di = 0; di < nd; ++di) {
      double sum = 0.0;
      std::size_t ok = 0;
      for (std::size_t si = 0; si < ns; ++si) {
        const SweepRecord& rec = result.records[di * ns + si];
        if (!rec.ok()) continue;
        sum += rec.grad_error;
        ++ok;
      }
      if (ok > 0) pts.emplace_back(delta_grid[di], sum / double(ok));
    }
  }
  result.slope = fit_loglog_slope(pts);
  return result;
}

double run_delta_scaling(const BilevelProblem& p, const Vec& theta, const std::string& method,
                         const std::vector<double>& delta_grid, const DeltaScalingOptions& opts) {
  return run_delta_scaling_full(p, theta, method, delta_grid, opts).slope;
}

BoundConstants estimate_constants(const BilevelProblem& p, const Vec& theta, double radius,
                                  const ConstantsOptions& opts) {
  if (!(radius > 0.0))
    fail(ErrorKind::region_too_small, "estimate_constants: radius must be > 0");
  if (opts.num_pairs < 10)
    fail(ErrorKind::region_too_small, "estimate_constants: need at least 10 sample pairs");

  const SolverConfig cfg = equilibrium_config(opts.equilibrium_tol, 200000);
  InnerSolveReport rep = minimize_inner(p, theta, Vec::zeros(p.phi_dim()), cfg);
  if (!rep.converged)
    fail(ErrorKind::diverged, "estimate_constants: base equilibrium did not converge");
  const Vec& center = rep.phi_hat;

  BoundConstants k;
  k.l_smooth = estimate_smoothness(p, center, theta, opts.power_iters);
  k.mu = estimate_strong_convexity(p, center, theta, opts.power_iters);

  Rng rng(Rng::derive(opts.seed, 0xb0d5));
  double b_in = 0.0, b_out = 0.0, rho = 0.0;
  for (int i = 0; i < opts.num_pairs; ++i) {
    const Vec a = add(center, scaled(rng.unit_vec(p.phi_dim()), radius * rng.uniform()));
    const Vec b = add(center, scaled(rng.unit_vec(p.phi_dim()), radius * rng.uniform()));
    const double dist = norm(sub(a, b));
    if (dist < 1e-12) continue;
    b_in = std::max(b_in, norm(sub(p.grad_theta_inner(a, theta), p.grad_theta_inner(b, theta))) /
                              dist);
    b_out = std::max(b_out, norm(sub(p.grad_theta_outer(a, theta),
                                     p.grad_theta_outer(b, theta))) /
                                dist);
    const Vec v = rng.unit_vec(p.phi_dim());
    rho = std::max(rho,
                   norm(sub(p.hvp_inner(a, theta, v), p.hvp_inner(b, theta, v))) / dist);
    rho = std::max(rho, norm(sub(p.cross_vjp_inner(a, theta, v),
                                 p.cross_vjp_inner(b, theta, v))) /
                            dist);
  }
  k.b_in = std::max(b_in, kPositiveFloor);
  k.b_out = std::max(b_out, kPositiveFloor);
  k.rho = std::max(rho, kPositiveFloor);

  // C captures the pure nudge-bias curve, so calibrate it on a sweep with no
  // injected error at all: there the bound degenerates to C beta/(1+beta).
  BetaSweepOptions sweep;
  sweep.beta_grid = opts.calibration_betas.empty()
                        ? std::vector<double>{1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0, 10.0}
                        : opts.calibration_betas;
  sweep.seeds = {opts.seed};
  sweep.equilibrium_tol = opts.equilibrium_tol;
  k.c = kPositiveFloor;
  k = fit_bound_constant(k, run_beta_sweep(p, theta, sweep));
  return k;
}

BoundConstants fit_bound_constant(BoundConstants base, const std::vector<SweepRecord>& records) {
  double c = std::max(base.c, kPositiveFloor);
  for (const SweepRecord& rec : records) {
    if (!rec.ok()) continue;
    const double covered = base.b_in * (rec.delta_injected + rec.delta_prime_injected) / rec.beta +
                           base.b_out * rec.delta_prime_injected;
    const double residual = rec.grad_error - covered;
    if (residual > 0.0) c = std::max(c, residual * (1.0 + rec.beta) / rec.beta);
  }
  base.c = c;
  return base;
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::string out = "method,beta,delta,delta_prime,seed,grad_error,bound_value,status\n";
  char buf[64];
  for (const SweepRecord& r : records) {
    out += r.method;
    out += ',';
    out += fmt(r.beta);
    out += ',';
    out += fmt(r.delta_injected);
    out += ',';
    out += fmt(r.delta_prime_injected);
    out += ',';
    std::snprintf(buf, sizeof buf, "%" PRIu64, r.seed);
    out += buf;
    out += ',';
    out += fmt(r.grad_error);
    out += ',';
    if (r.bound_value) out += fmt(*r.bound_value);
    out += ',';
    out += r.status;
    out += '\n';
  }
  return out;
}

std::vector<SweepRecord> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "method,beta,delta,delta_prime,seed,grad_error,bound_value,status")
    fail(ErrorKind::config, "parse_sweep_csv: bad or missing header");
  std::vector<SweepRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != 8)
      fail(ErrorKind::config,
           "parse_sweep_csv: line " + std::to_string(lineno) + " has " +
               std::to_string(fields.size()) + " fields, expected 8");
    const auto num = [&](const std::string& s, const char* what) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size() || s.empty())
        fail(ErrorKind::config, "parse_sweep_csv: line " + std::to_string(lineno) + ": bad " +
                                    what + " '" + s + "'");
      return v;
    };
    SweepRecord r;
    r.method = fields[0];
    r.beta = num(fields[1], "beta");
    r.delta_injected = num(fields[2], "delta");
    r.delta_prime_injected = num(fields[3], "delta_prime");
    {
      char* end = nullptr;
      r.seed = std::strtoull(fields[4].c_str(), &end, 10);
      if (end != fields[4].c_str() + fields[4].size() || fields[4].empty())
        fail(ErrorKind::config,
             "parse_sweep_csv: line " + std::to_string(lineno) + ": bad seed '" + fields[4] + "'");
    }
    r.grad_error = num(fields[5], "grad_error");
    if (!fields[6].empty()) r.bound_value = num(fields[6], "bound_value");
    r.status = fields[7];
    records.push_back(std::move(r));
  }
  return records;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::config, "write_sweep_csv: cannot open '" + path + "'");
  out << sweep_csv(records);
  if (!out) fail(ErrorKind::config, "write_sweep_csv: write to '" + path + "' failed");
}

}  // namespace bilevel
