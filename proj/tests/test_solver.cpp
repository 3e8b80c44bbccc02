#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "bilevel/errors.hpp"
#include "bilevel/mat.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/solver.hpp"

using namespace bilevel;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a bilevel::Error");
  return ErrorKind::config;
}

}  // namespace

TEST_CASE("gd on the scalar slice (phi - 3)^2 / 2") {
  const QuadraticBilevel p = QuadraticBilevel::p1();
  const Vec theta{3.0};

  SUBCASE("unit step is an exact Newton step") {
    SolverConfig cfg;
    cfg.step_size = 1.0;
    const auto rep = minimize_inner(p, theta, Vec{0.0}, cfg);
    CHECK(rep.iters == 1);
    CHECK(rep.phi_hat[0] == 3.0);
    CHECK(rep.converged);
    CHECK(rep.final_grad_norm == 0.0);
  }
  SUBCASE("half step follows the geometric recursion") {
    SolverConfig cfg;
    cfg.step_size = 0.5;
    cfg.grad_tol = 1e-14;  // unreachable in 40 iterations
    cfg.max_iters = 40;
    const auto rep = minimize_inner(p, theta, Vec{0.0}, cfg);
    CHECK(rep.iters == 40);
    CHECK_FALSE(rep.converged);
    CHECK(std::abs(rep.phi_hat[0] - 3.0) <= 1e-11);
    // phi_k = 3 (1 - 0.5^k), all quantities exactly representable.
    CHECK(rep.phi_hat[0] == doctest::Approx(3.0 * (1.0 - std::pow(0.5, 40))).epsilon(1e-13));
  }
}

TEST_CASE("auto step converges on the random quadratic") {
  const QuadraticBilevel p = QuadraticBilevel::random(0);  // |phi| = 10
  Rng rng(1);
  const Vec theta = rng.gaussian_vec(p.theta_dim());
  SolverConfig cfg;  // step unset -> 1/(1.05 L) by power iteration
  const auto rep = minimize_inner(p, theta, Vec::zeros(p.phi_dim()), cfg);
  CHECK(rep.converged);
  CHECK(rep.final_grad_norm <= 1e-10);
  CHECK(norm(p.grad_phi_inner(rep.phi_hat, theta)) <= 1e-10);
  // Strong convexity converts the gradient tolerance into a distance bound.
  CHECK(norm(sub(rep.phi_hat, p.solve_inner(theta))) <= 1e-10 / p.mu() + 1e-12);
  CHECK(rep.loss_trace.empty());  // off by default
}

TEST_CASE("augmented objective") {
  const QuadraticBilevel p = QuadraticBilevel::p1();
  const Vec theta{1.0};

  SUBCASE("P1 nudged minimizer is theta / (1 + beta)") {
    SolverConfig cfg;
    cfg.grad_tol = 1e-12;
    const auto rep = minimize_augmented(p, theta, 0.1, Vec{0.0}, cfg);
    CHECK(rep.converged);
    CHECK(rep.phi_hat[0] == doctest::Approx(1.0 / 1.1).epsilon(1e-10));
  }
  SUBCASE("beta = 0 reproduces minimize_inner bitwise") {
    Rng rng(2);
    const QuadraticBilevel q = QuadraticBilevel::random(3);
    const Vec th = rng.gaussian_vec(q.theta_dim());
    const Vec phi0 = rng.gaussian_vec(q.phi_dim());
    SolverConfig cfg;
    cfg.record_loss_trace = true;
    const auto plain = minimize_inner(q, th, phi0, cfg);
    const auto nudged = minimize_augmented(q, th, 0.0, phi0, cfg);
    CHECK(nudged.phi_hat == plain.phi_hat);
    CHECK(nudged.iters == plain.iters);
    CHECK(nudged.final_grad_norm == plain.final_grad_norm);
    CHECK(nudged.loss_trace == plain.loss_trace);
  }
  SUBCASE("negative beta needs the opt-in") {
    CHECK(kind_of([&] { minimize_augmented(p, theta, -0.1, Vec{0.0}, SolverConfig{}); }) ==
          ErrorKind::negative_beta_not_enabled);
  }
  SUBCASE("opted-in beta = -2 loses convexity and diverges") {
    // Total curvature 1 + beta = -1: the iteration runs uphill until the
    // loss stops being finite.
    SolverConfig cfg;
    cfg.step_size = 0.5;
    CHECK(kind_of([&] { minimize_augmented(p, theta, -2.0, Vec{0.0}, cfg, true); }) ==
          ErrorKind::diverged);
  }
  SUBCASE("mildly negative beta stays convex and works") {
    SolverConfig cfg;
    cfg.grad_tol = 1e-12;
    const auto rep = minimize_augmented(p, theta, -0.2, Vec{0.0}, cfg, true);
    CHECK(rep.converged);
    CHECK(rep.phi_hat[0] == doctest::Approx(1.0 / 0.8).epsilon(1e-10));
  }
}

TEST_CASE("oversized step diverges with a typed error") {
  const QuadraticBilevel p = QuadraticBilevel::random(0);
  SolverConfig cfg;
  cfg.step_size = 10.0;  // far beyond 2/L with L = 3
  Rng rng(4);
  const Vec theta = rng.gaussian_vec(p.theta_dim());
  CHECK(kind_of([&] { minimize_inner(p, theta, rng.gaussian_vec(p.phi_dim()), cfg); }) ==
        ErrorKind::diverged);
}

TEST_CASE("warm starts never lose to cold starts (20 instances)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const QuadraticBilevel p = QuadraticBilevel::random(seed);
    Rng rng(seed + 100);
    const Vec theta = rng.gaussian_vec(p.theta_dim());
    SolverConfig cfg;
    cfg.step_size = 1.0 / (1.05 * (p.smoothness() + 0.1));  // valid for L_in + 0.1 L_out
    const Vec zero = Vec::zeros(p.phi_dim());
    const auto base = minimize_inner(p, theta, zero, cfg);
    REQUIRE(base.converged);
    const auto warm = minimize_augmented(p, theta, 0.1, base.phi_hat, cfg);
    const auto cold = minimize_augmented(p, theta, 0.1, zero, cfg);
    CHECK(warm.iters <= cold.iters);
  }
}

TEST_CASE("loss trace is monotone for gd with lr <= 1/L") {
  Rng rng(6);

  auto run = [&](const BilevelProblem& p, const Vec& theta, const Vec& phi0) {
    SolverConfig cfg;
    cfg.step_size = 1.0 / estimate_smoothness(p, phi0, theta);
    cfg.record_loss_trace = true;
    cfg.grad_tol = 1e-10;
    const auto rep = minimize_inner(p, theta, phi0, cfg);
    REQUIRE(!rep.loss_trace.empty());
    CHECK(rep.loss_trace.front() == p.inner_loss(phi0, theta));
    for (std::size_t i = 1; i < rep.loss_trace.size(); ++i)
      CHECK(rep.loss_trace[i] <=
            rep.loss_trace[i - 1] + 4e-15 * (1.0 + std::abs(rep.loss_trace[i - 1])));
  };

  const QuadraticBilevel q = QuadraticBilevel::random(3);
  run(q, rng.gaussian_vec(4), rng.gaussian_vec(q.phi_dim()));
  const RidgeHyperopt r = RidgeHyperopt::synthetic(1);
  run(r, Vec{-0.5}, rng.gaussian_vec(r.phi_dim()));
  // The net's energy is only locally smooth; start inside the operating
  // region (near the forward sweep) where the pointwise Ritz value of L
  // actually governs the steps.
  const auto net = PredictiveCodingNet::random(2, {2, 3, 1});
  const Vec near = add(net.forward_pass(net.initial_theta()),
                       rng.gaussian_vec(net.phi_dim(), 0.1));
  run(net, net.initial_theta(), near);
}

TEST_CASE("heavy ball accepts momentum and still converges") {
  const QuadraticBilevel p = QuadraticBilevel::random(7);
  Rng rng(7);
  const Vec theta = rng.gaussian_vec(p.theta_dim());
  SolverConfig cfg;
  cfg.method = InnerMethod::heavy_ball;
  cfg.momentum = 0.5;
  const auto rep = minimize_inner(p, theta, Vec::zeros(p.phi_dim()), cfg);
  CHECK(rep.converged);
  CHECK(norm(sub(rep.phi_hat, p.solve_inner(theta))) <= 1e-9);
}

TEST_CASE("reports are bitwise deterministic") {
  const QuadraticBilevel p = QuadraticBilevel::random(9);
  Rng rng(9);
  const Vec theta = rng.gaussian_vec(p.theta_dim());
  const Vec phi0 = rng.gaussian_vec(p.phi_dim());
  SolverConfig cfg;
  cfg.record_loss_trace = true;
  const auto a = minimize_inner(p, theta, phi0, cfg);
  const auto b = minimize_inner(p, theta, phi0, cfg);
  CHECK(a.phi_hat == b.phi_hat);
  CHECK(a.iters == b.iters);
  CHECK(a.final_grad_norm == b.final_grad_norm);
  CHECK(a.loss_trace == b.loss_trace);
  if (a.converged) CHECK(a.final_grad_norm <= cfg.grad_tol);
}

TEST_CASE("Ritz estimates recover the planted spectrum") {
  // P1: the only eigenvalue is 1.
  const QuadraticBilevel p1 = QuadraticBilevel::p1();
  CHECK(estimate_smoothness(p1, Vec{0.3}, Vec{0.1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(estimate_strong_convexity(p1, Vec{0.3}, Vec{0.1}) == doctest::Approx(1.0).epsilon(1e-10));

  const QuadraticBilevel p = QuadraticBilevel::random(0);  // spectrum [0.5, 3.0]
  Rng rng(10);
  const Vec phi = rng.gaussian_vec(p.phi_dim());
  const Vec theta = rng.gaussian_vec(p.theta_dim());
  const double l_est = estimate_smoothness(p, phi, theta, 120);
  CHECK(l_est == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(l_est <= 3.0 + 1e-9);  // power iteration approaches from below
  const double mu_est = estimate_strong_convexity(p, phi, theta, 400);
  CHECK(mu_est == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(mu_est >= 0.5 - 1e-9);  // and the small end from above
}
