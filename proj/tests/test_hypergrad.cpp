#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "bilevel/errors.hpp"
#include "bilevel/hypergrad.hpp"
#include "bilevel/mat.hpp"
#include "bilevel/numdiff.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"
#include "bilevel/solver.hpp"
#include "bilevel/stencil.hpp"

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

// Indefinite inner curvature: L_in = (phi_0^2 - phi_1^2)/2, no theta coupling.
// Exists to probe the SPD guard rails; nothing here is minimizable.
class SaddleProblem final : public BilevelProblem {
 public:
  std::size_t phi_dim() const override { return 2; }
  std::size_t theta_dim() const override { return 1; }
  double inner_loss(const Vec& phi, const Vec&) const override {
    return 0.5 * (phi[0] * phi[0] - phi[1] * phi[1]);
  }
  double outer_loss(const Vec& phi, const Vec&) const override { return 0.5 * norm_sq(phi); }
  Vec grad_phi_inner(const Vec& phi, const Vec&) const override { return Vec{phi[0], -phi[1]}; }
  Vec grad_theta_inner(const Vec&, const Vec&) const override { return Vec{0.0}; }
  Vec grad_phi_outer(const Vec& phi, const Vec&) const override { return phi; }
  Vec grad_theta_outer(const Vec&, const Vec&) const override { return Vec{0.0}; }
  Vec hvp_inner(const Vec&, const Vec&, const Vec& v) const override { return Vec{v[0], -v[1]}; }
  Vec cross_vjp_inner(const Vec&, const Vec&, const Vec&) const override { return Vec{0.0}; }
};

// Same inner problem as a wrapped QuadraticBilevel, but the outer loss is
// identically zero.
class ZeroOuter final : public BilevelProblem {
 public:
  explicit ZeroOuter(QuadraticBilevel q) : q_(std::move(q)) {}
  std::size_t phi_dim() const override { return q_.phi_dim(); }
  std::size_t theta_dim() const override { return q_.theta_dim(); }
  double inner_loss(const Vec& phi, const Vec& theta) const override {
    return q_.inner_loss(phi, theta);
  }
  double outer_loss(const Vec&, const Vec&) const override { return 0.0; }
  Vec grad_phi_inner(const Vec& phi, const Vec& theta) const override {
    return q_.grad_phi_inner(phi, theta);
  }
  Vec grad_theta_inner(const Vec& phi, const Vec& theta) const override {
    return q_.grad_theta_inner(phi, theta);
  }
  Vec grad_phi_outer(const Vec&, const Vec&) const override { return Vec::zeros(q_.phi_dim()); }
  Vec grad_theta_outer(const Vec&, const Vec&) const override { return Vec::zeros(q_.theta_dim()); }
  Vec hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override {
    return q_.hvp_inner(phi, theta, v);
  }
  Vec cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const override {
    return q_.cross_vjp_inner(phi, theta, v);
  }

 private:
  QuadraticBilevel q_;
};

// Exact nudged equilibrium for a QuadraticBilevel with gamma-free outer loss:
// (H + beta I) phi = B theta + c + beta t.
Vec exact_nudged(const QuadraticBilevel& q, const Vec& theta, double beta) {
  const Vec phi0 = q.solve_inner(theta);
  // t = phi - grad_phi_outer(phi) at any phi.
  const Vec t = sub(phi0, q.grad_phi_outer(phi0, theta));
  const std::size_t n = q.phi_dim();
  DenseMat a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = q.hessian()(i, j) + (i == j ? beta : 0.0);
  return solve_spd(a, add(matvec(q.hessian(), phi0), scaled(t, beta)));
}

SolverConfig tight_solver() {
  SolverConfig cfg;
  cfg.grad_tol = 1e-13;
  cfg.max_iters = 200000;
  return cfg;
}

}  // namespace

TEST_CASE("oracle_exact") {
  SUBCASE("P1") {
    const QuadraticBilevel p = QuadraticBilevel::p1();
    const auto est = oracle_exact(p, Vec{2.0}, Vec{2.0});
    CHECK(est.method == "oracle");
    CHECK(est.grad[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(est.hvp_count == 1);  // = |phi|
    CHECK(est.inner_solve_count == 0);
  }
  SUBCASE("outer optimum gives a zero gradient") {
    const auto h = DenseMat::from_rows({{2.0, 0.5}, {0.5, 1.0}});
    const auto b = DenseMat::from_rows({{1.0}, {-1.0}});
    const Vec c{0.3, -0.2};
    const Vec theta{0.8};
    QuadraticBilevel probe(h, b, c, Vec::zeros(2), 0.0);
    const Vec t = probe.solve_inner(theta);
    const QuadraticBilevel p(h, b, c, t, 0.0);
    const auto est = oracle_exact(p, p.solve_inner(theta), theta);
    CHECK(norm(est.grad) <= 1e-9);
  }
  SUBCASE("random instance vs FD through the solution") {
    QuadraticBilevel::RandomOptions opts;
    opts.phi_dim = 8;
    opts.theta_dim = 4;
    const QuadraticBilevel p = QuadraticBilevel::random(3, opts);
    Rng rng(3);
    const Vec theta = rng.gaussian_vec(4);
    const auto est = oracle_exact(p, p.solve_inner(theta), theta);
    CHECK(est.hvp_count == 8);
    auto through = [&](const Vec& th) { return p.outer_loss(p.solve_inner(th), th); };
    const Vec fd = central_diff_grad(through, theta, 1e-5);
    CHECK(norm(sub(est.grad, fd)) <= 1e-6 * (1.0 + norm(fd)));
    // And the closed form agrees too.
    CHECK(norm(sub(est.grad, p.closed_form_solution(theta).second)) <= 1e-9);
  }
  SUBCASE("indefinite Hessian is refused") {
    CHECK(kind_of([] { oracle_exact(SaddleProblem{}, Vec{0.1, 0.1}, Vec{0.0}); }) ==
          ErrorKind::not_spd);
  }
}

TEST_CASE("first_order and one_step_identity") {
  const QuadraticBilevel p1 = QuadraticBilevel::p1();
  const auto fo = first_order(p1, Vec{2.0}, Vec{2.0});
  CHECK(fo.method == "first_order");
  CHECK(fo.grad[0] == 0.0);  // direct derivative only; true value is 2
  CHECK(fo.hvp_count == 0);
  CHECK(fo.inner_solve_count == 0);
  CHECK(fo.phase2_iters == 0);

  // H = Id makes the identity approximation exact.
  const auto id = one_step_identity(p1, Vec{2.0}, Vec{2.0});
  CHECK(id.method == "identity");
  CHECK(id.grad[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(id.hvp_count == 0);

  SUBCASE("ridge outer loss has no explicit theta term") {
    const auto r = RidgeHyperopt::synthetic(3);
    Rng rng(3);
    const auto est = first_order(r, rng.gaussian_vec(r.phi_dim()), Vec{-0.5});
    CHECK(norm(est.grad) == 0.0);
  }
  SUBCASE("explicit gamma term survives") {
    QuadraticBilevel::RandomOptions opts;
    opts.gamma = 0.3;
    const auto q = QuadraticBilevel::random(2, opts);
    Rng rng(2);
    const Vec theta = rng.gaussian_vec(q.theta_dim());
    const auto est = first_order(q, q.solve_inner(theta), theta);
    CHECK(norm(sub(est.grad, scaled(theta, 0.3))) <= 1e-14);
  }
  SUBCASE("H = 2 Id doubles the implicit part") {
    DenseMat h = DenseMat::identity(3);
    for (std::size_t i = 0; i < 3; ++i) h(i, i) = 2.0;
    const auto b = DenseMat::from_rows({{1.0, 0.0}, {0.5, 1.0}, {0.0, -1.0}});
    const QuadraticBilevel q(h, b, Vec{0.1, 0.2, -0.3}, Vec{1.0, -1.0, 0.5}, 0.0);
    Rng rng(4);
    const Vec theta = rng.gaussian_vec(2);
    const Vec phi = q.solve_inner(theta);
    const Vec oracle = oracle_exact(q, phi, theta).grad;
    const Vec direct = first_order(q, phi, theta).grad;
    const Vec ident = one_step_identity(q, phi, theta).grad;
    // identity inflates (oracle - direct) by exactly H = 2.
    CHECK(norm(sub(ident, add(direct, scaled(sub(oracle, direct), 2.0)))) <= 1e-10);
    CHECK(norm(sub(ident, oracle)) > 1e-3);  // and is visibly not the oracle
  }
  SUBCASE("zero outer phi-gradient collapses identity to first_order") {
    const auto h = DenseMat::from_rows({{2.0, 0.5}, {0.5, 1.0}});
    const auto b = DenseMat::from_rows({{1.0}, {-1.0}});
    const Vec c{0.3, -0.2};
    const Vec theta{0.8};
    QuadraticBilevel probe(h, b, c, Vec::zeros(2), 0.0);
    const Vec t = probe.solve_inner(theta);
    const QuadraticBilevel p(h, b, c, t, 0.0);
    const Vec phi = p.solve_inner(theta);
    CHECK(one_step_identity(p, phi, theta).grad == first_order(p, phi, theta).grad);
  }
}

TEST_CASE("assemble_gradient") {
  const QuadraticBilevel p1 = QuadraticBilevel::p1();
  CHECK(assemble_gradient(p1, Vec{2.0}, Vec{2.0}, PiVector{Vec{2.0}})[0] ==
        doctest::Approx(2.0).epsilon(1e-14));

  const QuadraticBilevel q = QuadraticBilevel::random(6);
  Rng rng(6);
  const Vec theta = rng.gaussian_vec(q.theta_dim());
  const Vec phi = q.solve_inner(theta);
  CHECK(assemble_gradient(q, phi, theta, PiVector{Vec::zeros(q.phi_dim())}) ==
        first_order(q, phi, theta).grad);

  // pi from the dense solve reproduces the oracle by definition.
  const Vec pi = solve_spd(q.hessian(), q.grad_phi_outer(phi, theta));
  CHECK(norm(sub(assemble_gradient(q, phi, theta, PiVector{pi}), oracle_exact(q, phi, theta).grad)) <=
        1e-10);

  CHECK(kind_of([&] { assemble_gradient(q, phi, theta, PiVector{Vec{1.0}}); }) ==
        ErrorKind::dim_mismatch);
}

TEST_CASE("rbp_neumann") {
  SUBCASE("P1 with alpha = 1 lands in one step") {
    const QuadraticBilevel p = QuadraticBilevel::p1();
    const auto est = rbp_neumann(p, Vec{2.0}, Vec{2.0}, 1.0, 1);
    CHECK(est.method == "rbp");
    CHECK(est.grad[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(est.hvp_count == 1);
    CHECK(est.phase2_iters == 1);
  }
  SUBCASE("k = 0 is first_order") {
    const QuadraticBilevel q = QuadraticBilevel::random(1);
    Rng rng(1);
    const Vec theta = rng.gaussian_vec(q.theta_dim());
    const Vec phi = q.solve_inner(theta);
    const auto est = rbp_neumann(q, phi, theta, 0.3, 0);
    CHECK(est.grad == first_order(q, phi, theta).grad);
    CHECK(est.hvp_count == 0);
  }
  SUBCASE("diagonal system reaches g H^-1 and matches the dense solve") {
    // H = diag(1, 2), B = Id so the returned gradient *is* pi.
    const auto h = DenseMat::from_rows({{1.0, 0.0}, {0.0, 2.0}});
    const QuadraticBilevel q(h, DenseMat::identity(2), Vec::zeros(2), Vec::zeros(2), 0.0);
    const Vec theta{1.0, 2.0};
    const Vec phi = q.solve_inner(theta);  // = (1, 1), so g = phi - t = (1, 1)
    REQUIRE(norm(sub(phi, Vec{1.0, 1.0})) <= 1e-14);
    const auto est = rbp_neumann(q, phi, theta, 0.4, 60);
    CHECK(norm(sub(est.grad, Vec{1.0, 0.5})) <= 1e-9);
    const Vec pi_dense = solve_spd(h, q.grad_phi_outer(phi, theta));
    CHECK(norm(sub(est.grad, assemble_gradient(q, phi, theta, PiVector{pi_dense}))) <= 1e-9);
  }
  SUBCASE("iterates equal the explicit Neumann partial sums") {
    const QuadraticBilevel q = QuadraticBilevel::random(4);
    Rng rng(4);
    const Vec theta = rng.gaussian_vec(q.theta_dim());
    const Vec phi = q.solve_inner(theta);
    const Vec g = q.grad_phi_outer(phi, theta);
    const double alpha = 0.25;
    for (int k : {1, 2, 5, 10}) {
      // alpha * sum_{i<k} (I - alpha H)^i g, accumulated densely.
      Vec term = g, sum = g;
      for (int i = 1; i < k; ++i) {
        term = sub(term, scaled(q.hvp_inner(phi, theta, term), alpha));
        sum = add(sum, term);
      }
      const Vec pi_ref = scaled(sum, alpha);
      const auto est = rbp_neumann(q, phi, theta, alpha, k);
      CHECK(est.phase2_iters == k);
      CHECK(est.hvp_count == k);
      CHECK(norm(sub(est.grad, assemble_gradient(q, phi, theta, PiVector{pi_ref}))) <= 1e-10);
    }
  }
  SUBCASE("tol stops early and the residual is reported") {
    const QuadraticBilevel q = QuadraticBilevel::random(4);
    Rng rng(4);
    const Vec theta = rng.gaussian_vec(q.theta_dim());
    const Vec phi = q.solve_inner(theta);
    const auto est = rbp_neumann(q, phi, theta, 1.0 / q.smoothness(), 100000, 1e-12);
    CHECK(est.phase2_iters < 100000);
    REQUIRE(est.residual.has_value());
    const auto oracle = oracle_exact(q, phi, theta);
    CHECK(norm(sub(est.grad, oracle.grad)) <= 1e-9);
  }
  SUBCASE("alpha past 2/L diverges with a typed error") {
    const QuadraticBilevel q = QuadraticBilevel::random(0);  // L = 3
    Rng rng(0);
    const Vec theta = rng.gaussian_vec(q.theta_dim());
    const Vec phi = q.solve_inner(theta);
    CHECK(kind_of([&] { rbp_neumann(q, phi, theta, 1.0, 100000); }) == ErrorKind::diverged);
  }
}

TEST_CASE("conjugate_gradient") {
  SUBCASE("identity Hessian needs exactly one iteration") {
    const QuadraticBilevel q(DenseMat::identity(3), DenseMat::identity(3), Vec::zeros(3),
                             Vec{0.2, -0.4, 1.0}, 0.0);
    const Vec theta{1.0, -1.0, 0.5};
    const Vec phi = q.solve_inner(theta);
    const auto est = conjugate_gradient(q, phi, theta, 50, 1e-12);
    CHECK(est.method == "cg");
    CHECK(est.phase2_iters == 1);
    CHECK(est.hvp_count == est.phase2_iters);
    // B = Id turns the gradient into pi itself; H = Id makes pi = g.
    CHECK(norm(sub(est.grad, q.grad_phi_outer(phi, theta))) <= 1e-12);
  }
  SUBCASE("P1 in one iteration") {
    const auto est = conjugate_gradient(QuadraticBilevel::p1(), Vec{2.0}, Vec{2.0}, 10, 1e-12);
    CHECK(est.grad[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(est.phase2_iters == 1);
  }
  SUBCASE("12x12: finite termination matches the dense solve") {
    QuadraticBilevel::RandomOptions opts;
    opts.phi_dim = 12;
    opts.theta_dim = 3;
    const QuadraticBilevel q = QuadraticBilevel::random(5, opts);
    Rng rng(5);
    const Vec theta = rng.gaussian_vec(3);
    const Vec phi = q.solve_inner(theta);
    const auto est = conjugate_gradient(q, phi, theta, 12, 1e-14);
    CHECK(est.phase2_iters <= 12);
    const Vec pi_dense = solve_spd(q.hessian(), q.grad_phi_outer(phi, theta));
    CHECK(norm(sub(est.grad, assemble_gradient(q, phi, theta, PiVector{pi_dense}))) <= 1e-8);
    REQUIRE(est.residual.has_value());
    CHECK(*est.residual <= 1e-8);
  }
  SUBCASE("indefinite curvature is reported") {
    CHECK(kind_of([] { conjugate_gradient(SaddleProblem{}, Vec{0.3, 0.4}, Vec{0.0}, 10, 1e-10); }) ==
          ErrorKind::indefinite_detected);
  }
}

TEST_CASE("ep_estimate") {
  const QuadraticBilevel p1 = QuadraticBilevel::p1();
  const Vec theta{1.0};
  const Vec phi0{1.0};  // exact unnudged equilibrium

  SUBCASE("P1 two-point closed form theta / (1 + beta)") {
    const auto st = with_step(solve_fd_stencil(2, StencilKind::forward), 0.1);
    const auto est = ep_estimate(p1, theta, phi0, st, tight_solver());
    CHECK(est.method == "ep");
    CHECK(est.grad[0] == doctest::Approx(1.0 / 1.1).epsilon(1e-9));
    CHECK(est.hvp_count == 0);
    CHECK(est.inner_solve_count == 1);
    REQUIRE(est.beta.has_value());
    CHECK(*est.beta == 0.1);
  }
  SUBCASE("P1 symmetric closed form theta / (1 - beta^2)") {
    const auto st = with_step(solve_fd_stencil(3, StencilKind::symmetric), 0.1);
    EpOptions opts;
    opts.allow_negative_beta = true;
    const auto est = ep_estimate(p1, theta, phi0, st, tight_solver(), opts);
    CHECK(est.grad[0] == doctest::Approx(1.0 / 0.99).epsilon(1e-9));
    CHECK(est.inner_solve_count == 2);
  }
  SUBCASE("symmetric stencil without the opt-in is refused") {
    const auto st = with_step(solve_fd_stencil(3, StencilKind::symmetric), 0.1);
    CHECK(kind_of([&] { ep_estimate(p1, theta, phi0, st, tight_solver()); }) ==
          ErrorKind::negative_beta_not_enabled);
  }
  SUBCASE("zero outer loss cancels to the zero vector") {
    const ZeroOuter z(QuadraticBilevel::random(2));
    Rng rng(2);
    const Vec th = rng.gaussian_vec(z.theta_dim());
    SolverConfig solver = tight_solver();
    const Vec phi = minimize_inner(z, th, Vec::zeros(z.phi_dim()), solver).phi_hat;
    for (int p : {2, 3}) {
      const auto st = with_step(solve_fd_stencil(p, StencilKind::forward), 0.05);
      const auto est = ep_estimate(z, th, phi, st, solver);
      CHECK(norm(est.grad) <= 1e-10);
    }
  }
  SUBCASE("diverging nudged phase is wrapped with the node") {
    SolverConfig bad = tight_solver();
    bad.step_size = 10.0;
    const auto st = with_step(solve_fd_stencil(2, StencilKind::forward), 0.1);
    try {
      ep_estimate(p1, theta, phi0, st, bad);
      FAIL("expected PhaseDiverged");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::phase_diverged);
      CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
  }
  SUBCASE("cold starts land on the same estimate") {
    const QuadraticBilevel q = QuadraticBilevel::random(7);
    Rng rng(7);
    const Vec th = rng.gaussian_vec(q.theta_dim());
    const Vec phi = q.solve_inner(th);
    const auto st = with_step(solve_fd_stencil(3, StencilKind::forward), 0.05);
    EpOptions cold;
    cold.chain_warm_starts = false;
    const auto warm = ep_estimate(q, th, phi, st, tight_solver());
    const auto coldest = ep_estimate(q, th, phi, st, tight_solver(), cold);
    CHECK(norm(sub(warm.grad, coldest.grad)) <= 1e-8);
  }
}

TEST_CASE("EP bias order in beta on P1 (exact closed forms as oracle)") {
  // Equilibria are solver-resolved; the expected biases follow from the
  // geometric series of 1/(1 + i beta):
  //   two-point     theta (1 - beta + ...)        -> slope 1
  //   symmetric     theta / (1 - beta^2)          -> slope 2
  //   forward 3-pt  theta (1 - 2 beta^2 + ...)    -> slope 2
  //   forward 4-pt  theta (1 - 6 beta^3 + ...)    -> slope 3
  const QuadraticBilevel p1 = QuadraticBilevel::p1();
  const Vec theta{1.0};
  const Vec phi0{1.0};
  const double true_grad = 1.0;

  const struct {
    int p;
    StencilKind kind;
    double lo, hi;  // slope window
  } rows[] = {
      {2, StencilKind::forward, 0.9, 1.1},
      {3, StencilKind::symmetric, 1.85, 2.15},
      {3, StencilKind::forward, 1.85, 2.15},
      {4, StencilKind::forward, 2.7, 3.3},
  };
  for (const auto& row : rows) {
    const FDStencil base = solve_fd_stencil(row.p, row.kind);
    EpOptions opts;
    opts.allow_negative_beta = (row.kind == StencilKind::symmetric);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 7; ++i) {
      const double beta = 1e-3 * std::pow(100.0, i / 6.0);  // [1e-3, 1e-1]
      const auto est = ep_estimate(p1, theta, phi0, with_step(base, beta), tight_solver(), opts);
      pts.emplace_back(beta, std::abs(est.grad[0] - true_grad));
    }
    const double slope = fit_loglog_slope(pts);
    CHECK(slope >= row.lo);
    CHECK(slope <= row.hi);
  }
}

TEST_CASE("estimators agree with the oracle across the suite") {
  // phi solved to 1e-12; CG and RBP must sit within 1e-7 of the dense oracle,
  // EP two-point at beta = 1e-4 within 1e-3.
  SolverConfig solver;
  solver.grad_tol = 1e-12;
  solver.max_iters = 300000;

  auto run = [&](const BilevelProblem& p, const Vec& theta, const Vec& start) {
    const auto inner = minimize_inner(p, theta, start, solver);
    REQUIRE(inner.converged);
    const Vec phi = inner.phi_hat;
    const auto oracle = oracle_exact(p, phi, theta);
    const double scale = 1.0 + norm(oracle.grad);

    const auto cg = conjugate_gradient(p, phi, theta, 4000, 1e-12);
    CHECK(norm(sub(cg.grad, oracle.grad)) <= 1e-7 * scale);

    const double alpha = 1.0 / estimate_smoothness(p, phi, theta);
    const auto rbp = rbp_neumann(p, phi, theta, alpha, 5000);
    CHECK(norm(sub(rbp.grad, oracle.grad)) <= 1e-7 * scale);

    const auto st = with_step(solve_fd_stencil(2, StencilKind::forward), 1e-4);
    const auto ep = ep_estimate(p, theta, phi, st, solver);
    CHECK(norm(sub(ep.grad, oracle.grad)) <= 1e-3 * scale);
  };

  Rng rng(50);
  SUBCASE("random quadratic") {
    const QuadraticBilevel q = QuadraticBilevel::random(0);
    run(q, rng.gaussian_vec(q.theta_dim()), Vec::zeros(q.phi_dim()));
  }
  SUBCASE("ridge") {
    const auto r = RidgeHyperopt::synthetic(3);
    run(r, Vec{-0.5}, Vec::zeros(r.phi_dim()));
  }
  SUBCASE("meta-ridge task") {
    const MetaRidge meta(5);
    const auto task = meta.sample_task(0);
    Vec theta = rng.gaussian_vec(task.theta_dim(), 0.3);
    theta[0] = -0.5;
    run(task, theta, Vec::zeros(task.phi_dim()));
  }
  SUBCASE("predictive coding net") {
    const auto net = PredictiveCodingNet::random(1, {2, 3, 1});
    run(net, net.initial_theta(), net.forward_pass(net.initial_theta()));
  }
}

TEST_CASE("truncation refines monotonically toward the oracle") {
  const QuadraticBilevel q = QuadraticBilevel::random(2);
  Rng rng(2);
  const Vec theta = rng.gaussian_vec(q.theta_dim());
  const Vec phi = q.solve_inner(theta);
  const Vec oracle = oracle_exact(q, phi, theta).grad;
  const double alpha = 1.0 / q.smoothness();

  const double e_fo = norm(sub(first_order(q, phi, theta).grad, oracle));
  const double e_k1 = norm(sub(rbp_neumann(q, phi, theta, alpha, 1).grad, oracle));
  const double e_k10 = norm(sub(rbp_neumann(q, phi, theta, alpha, 10).grad, oracle));
  CHECK(e_fo >= e_k1);
  CHECK(e_k1 >= e_k10);
}

TEST_CASE("mixed second derivatives through equilibria commute") {
  // d_theta of L_out(phi*_{theta,beta}) vs d_beta of the theta-gradient of the
  // nudged loss, both by nested central differences over exact equilibria.
  auto check_problem = [](const QuadraticBilevel& q, const Vec& theta0, double beta0) {
    const double h = 1e-4;
    const std::size_t m = q.theta_dim();

    // d_theta [ dL/dbeta ] with dL/dbeta = L_out at the equilibrium.
    Vec lhs(m);
    for (std::size_t j = 0; j < m; ++j) {
      Vec tp = theta0, tm = theta0;
      tp[j] += h;
      tm[j] -= h;
      const double fp = q.outer_loss(exact_nudged(q, tp, beta0), tp);
      const double fm = q.outer_loss(exact_nudged(q, tm, beta0), tm);
      lhs[j] = (fp - fm) / (2.0 * h);
    }

    // d_beta [ dL/dtheta ] with dL/dtheta = grad_theta_inner + beta grad_theta_outer.
    auto theta_grad = [&](double beta) {
      const Vec phi = exact_nudged(q, theta0, beta);
      return add(q.grad_theta_inner(phi, theta0), scaled(q.grad_theta_outer(phi, theta0), beta));
    };
    const Vec rhs = scaled(sub(theta_grad(beta0 + h), theta_grad(beta0 - h)), 1.0 / (2.0 * h));

    CHECK(norm(sub(lhs, rhs)) <= 1e-4 * (1.0 + norm(lhs)));
  };

  check_problem(QuadraticBilevel::p1(), Vec{1.0}, 0.05);
  const QuadraticBilevel q = QuadraticBilevel::random(8);
  Rng rng(8);
  check_problem(q, rng.gaussian_vec(q.theta_dim()), 0.05);
}

TEST_CASE("ep_pi_recover") {
  SUBCASE("P1 closed forms") {
    const QuadraticBilevel p1 = QuadraticBilevel::p1();
    const double beta = 0.01;
    const Vec phi0{1.0};
    const Vec phib{1.0 / 1.01};
    const auto pi = ep_pi_recover(p1, Vec{1.0}, phi0, phib, beta);
    CHECK(pi.pi[0] == doctest::Approx((1.0 - 1.0 / 1.01) / 0.01).epsilon(1e-12));
    // Implicit-differentiation target is g H^-1 = 1; gap is O(beta).
    CHECK(std::abs(pi.pi[0] - 1.0) <= 0.011);
    CHECK(std::abs(pi.pi[0] - 1.0) >= 0.009);
  }
  SUBCASE("zero outer loss recovers the zero vector") {
    const ZeroOuter z(QuadraticBilevel::random(2));
    Rng rng(2);
    const Vec th = rng.gaussian_vec(z.theta_dim());
    SolverConfig solver = tight_solver();
    const Vec phi0 = minimize_inner(z, th, Vec::zeros(z.phi_dim()), solver).phi_hat;
    const Vec phib = minimize_augmented(z, th, 0.05, phi0, solver).phi_hat;
    CHECK(norm(ep_pi_recover(z, th, phi0, phib, 0.05).pi) <= 1e-10);
  }
  SUBCASE("bias shrinks linearly in beta on the random quadratic") {
    const QuadraticBilevel q = QuadraticBilevel::random(0);
    Rng rng(9);
    const Vec theta = rng.gaussian_vec(q.theta_dim());
    const Vec phi0 = q.solve_inner(theta);
    const Vec pi_star = solve_spd(q.hessian(), q.grad_phi_outer(phi0, theta));
    auto gap = [&](double beta) {
      const Vec phib = exact_nudged(q, theta, beta);
      return norm(sub(ep_pi_recover(q, theta, phi0, phib, beta).pi, pi_star));
    };
    const double ratio = gap(1e-2) / gap(1e-3);
    CHECK(ratio >= 9.0);
    CHECK(ratio <= 11.0);
  }
  SUBCASE("dimension guard") {
    const QuadraticBilevel p1 = QuadraticBilevel::p1();
    CHECK(kind_of([&] { ep_pi_recover(p1, Vec{1.0}, Vec{1.0, 2.0}, Vec{1.0}, 0.1); }) ==
          ErrorKind::dim_mismatch);
  }
}
