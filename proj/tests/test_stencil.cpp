#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "bilevel/errors.hpp"
#include "bilevel/numdiff.hpp"
#include "bilevel/rational.hpp"
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

// Apply a stepped stencil to a scalar function around 0.
double apply(const FDStencil& s, const std::function<double(double)>& f) {
  double acc = 0.0;
  for (int i = 0; i < s.points; ++i) acc += s.coefficients[std::size_t(i)] * f(s.nodes[std::size_t(i)] * s.step);
  return acc / s.step;
}

}  // namespace

TEST_CASE("forward coefficient table") {
  using R = Rational;
  const std::vector<std::vector<R>> table = {
      {R(-1), R(1)},
      {R(-3, 2), R(2), R(-1, 2)},
      {R(-11, 6), R(3), R(-3, 2), R(1, 3)},
      {R(-25, 12), R(4), R(-3), R(4, 3), R(-1, 4)},
  };
  for (std::size_t row = 0; row < table.size(); ++row) {
    const int p = int(row) + 2;
    const auto exact = exact_stencil_coefficients(p, StencilKind::forward);
    REQUIRE(exact.size() == std::size_t(p));
    for (std::size_t i = 0; i < exact.size(); ++i) CHECK(exact[i] == table[row][i]);

    const FDStencil s = solve_fd_stencil(p, StencilKind::forward);
    CHECK(s.kind == StencilKind::forward);
    CHECK(s.points == p);
    CHECK(s.step == 0.0);
    REQUIRE(s.coefficients.size() == std::size_t(p));
    REQUIRE(s.nodes.size() == std::size_t(p));
    for (int i = 0; i < p; ++i) {
      CHECK(s.nodes[std::size_t(i)] == i);
      CHECK(std::abs(s.coefficients[std::size_t(i)] - table[row][std::size_t(i)].value()) <= 1e-12);
    }
  }
}

TEST_CASE("moment conditions define the coefficients") {
  // sum_i alpha_i i^k = [k == 1] for k < p. In rationals this must hold
  // exactly; the double version is held to 1e-10 through p = 6.
  for (int p = 2; p <= 8; ++p) {
    const auto exact = exact_stencil_coefficients(p, StencilKind::forward);
    for (int k = 0; k < p; ++k) {
      Rational m(0);
      for (int i = 0; i < p; ++i) {
        Rational pw(1);
        for (int rep = 0; rep < k; ++rep) pw = pw * Rational(i);
        m = m + exact[std::size_t(i)] * pw;
      }
      CHECK(m == Rational(k == 1 ? 1 : 0));
    }
  }
  for (int p = 2; p <= 6; ++p) {
    const FDStencil s = solve_fd_stencil(p, StencilKind::forward);
    for (int k = 0; k < p; ++k) {
      double m = 0.0;
      for (int i = 0; i < p; ++i) m += s.coefficients[std::size_t(i)] * std::pow(double(i), double(k));
      CHECK(std::abs(m - (k == 1 ? 1.0 : 0.0)) <= 1e-10);
    }
  }
}

TEST_CASE("symmetric stencil is the hard-coded central rule") {
  const FDStencil s = solve_fd_stencil(3, StencilKind::symmetric);
  CHECK(s.kind == StencilKind::symmetric);
  CHECK(s.points == 3);
  REQUIRE(s.nodes.size() == 3);
  CHECK(s.nodes[0] == -1);
  CHECK(s.nodes[1] == 0);
  CHECK(s.nodes[2] == 1);
  CHECK(s.coefficients[0] == -0.5);
  CHECK(s.coefficients[1] == 0.0);
  CHECK(s.coefficients[2] == 0.5);

  const auto exact = exact_stencil_coefficients(3, StencilKind::symmetric);
  REQUIRE(exact.size() == 3);
  CHECK(exact[0] == Rational(-1, 2));
  CHECK(exact[1] == Rational(0));
  CHECK(exact[2] == Rational(1, 2));
}

TEST_CASE("measured order of accuracy on exp is p-1 (forward) and 2 (symmetric)") {
  auto f = [](double t) { return std::exp(t); };  // f'(0) = 1
  const struct {
    int p;
    StencilKind kind;
    double h_lo, h_hi, want;
  } rows[] = {
      {2, StencilKind::forward, 1e-4, 1e-2, 1.0},
      {3, StencilKind::forward, 1e-3, 1e-2, 2.0},
      {5, StencilKind::forward, 3e-2, 3e-1, 4.0},
      {3, StencilKind::symmetric, 1e-3, 1e-2, 2.0},
  };
  for (const auto& row : rows) {
    const FDStencil base = solve_fd_stencil(row.p, row.kind);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 6; ++i) {
      const double h = row.h_lo * std::pow(row.h_hi / row.h_lo, i / 5.0);
      const double err = std::abs(apply(with_step(base, h), f) - 1.0);
      pts.emplace_back(h, err);
    }
    const double slope = fit_loglog_slope(pts);
    CHECK(slope == doctest::Approx(row.want).epsilon(0.06));
  }
}

TEST_CASE("large p falls back to double solve and still differentiates") {
  const FDStencil s = solve_fd_stencil(10, StencilKind::forward);
  REQUIRE(s.coefficients.size() == 10);
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < 10; ++i) {
    m0 += s.coefficients[std::size_t(i)];
    m1 += s.coefficients[std::size_t(i)] * double(i);
  }
  CHECK(std::abs(m0) <= 1e-8);
  CHECK(std::abs(m1 - 1.0) <= 1e-8);
  const double est = apply(with_step(s, 0.05), [](double t) { return std::sin(t); });
  CHECK(est == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("with_step and kind parsing") {
  const FDStencil s = with_step(solve_fd_stencil(2, StencilKind::forward), 0.25);
  CHECK(s.step == 0.25);
  CHECK(kind_of([] { with_step(solve_fd_stencil(2, StencilKind::forward), 0.0); }) ==
        ErrorKind::non_positive_beta);
  CHECK(kind_of([] { with_step(solve_fd_stencil(2, StencilKind::forward), -0.1); }) ==
        ErrorKind::non_positive_beta);

  CHECK(stencil_kind_from_string("forward") == StencilKind::forward);
  CHECK(stencil_kind_from_string("symmetric") == StencilKind::symmetric);
  CHECK(std::string(to_string(StencilKind::forward)) == "forward");
  CHECK(std::string(to_string(StencilKind::symmetric)) == "symmetric");
  CHECK(kind_of([] { stencil_kind_from_string("central"); }) == ErrorKind::config);
}

TEST_CASE("unsupported stencils are refused") {
  CHECK(kind_of([] { solve_fd_stencil(1, StencilKind::forward); }) == ErrorKind::unsupported_stencil);
  CHECK(kind_of([] { solve_fd_stencil(0, StencilKind::forward); }) == ErrorKind::unsupported_stencil);
  CHECK(kind_of([] { solve_fd_stencil(-3, StencilKind::forward); }) == ErrorKind::unsupported_stencil);
  CHECK(kind_of([] { solve_fd_stencil(2, StencilKind::symmetric); }) == ErrorKind::unsupported_stencil);
  CHECK(kind_of([] { solve_fd_stencil(5, StencilKind::symmetric); }) == ErrorKind::unsupported_stencil);
  CHECK(kind_of([] { exact_stencil_coefficients(9, StencilKind::forward); }) ==
        ErrorKind::unsupported_stencil);
}
