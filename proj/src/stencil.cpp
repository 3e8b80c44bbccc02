#include "bilevel/stencil.hpp"

#include <cmath>
#include <cstdlib>

namespace bilevel {

const char* to_string(StencilKind k) {
  return k == StencilKind::forward ? "forward" : "symmetric";
}

StencilKind stencil_kind_from_string(const std::string& s) {
  if (s == "forward") return StencilKind::forward;
  if (s == "symmetric") return StencilKind::symmetric;
  fail(ErrorKind::config, "unknown stencil kind '" + s + "' (want forward|symmetric)");
}

namespace {

std::vector<Rational> solve_vandermonde_exact(int p) {
  // Row k is the k-th moment equation, RHS selects the first derivative.
  std::vector<std::vector<Rational>> m(p, std::vector<Rational>(p + 1));
  for (int k = 0; k < p; ++k) {
    for (int i = 0; i < p; ++i) {
      std::int64_t pw = 1;
      for (int e = 0; e < k; ++e) pw *= i;
      m[k][i] = Rational(pw);
    }
    m[k][p] = Rational(k == 1 ? 1 : 0);
  }
  for (int col = 0; col < p; ++col) {
    int piv = col;
    while (piv < p && m[piv][col].is_zero()) ++piv;
    if (piv == p) fail(ErrorKind::unsupported_stencil, "singular stencil system");
    std::swap(m[col], m[piv]);
    for (int r = 0; r < p; ++r) {
      if (r == col || m[r][col].is_zero()) continue;
      const Rational f = m[r][col] / m[col][col];
      for (int c = col; c <= p; ++c) m[r][c] = m[r][c] - f * m[col][c];
    }
  }
  std::vector<Rational> alpha(p);
  for (int i = 0; i < p; ++i) alpha[i] = m[i][p] / m[i][i];
  return alpha;
}

std::vector<double> solve_vandermonde_double(int p) {
  std::vector<std::vector<double>> m(p, std::vector<double>(p + 1, 0.0));
  for (int k = 0; k < p; ++k) {
    for (int i = 0; i < p; ++i) m[k][i] = std::pow(double(i), double(k));
    m[k][0] = (k == 0) ? 1.0 : 0.0;  // 0^0 = 1 under the moment convention
    m[k][p] = (k == 1) ? 1.0 : 0.0;
  }
  for (int col = 0; col < p; ++col) {
    int piv = col;
    for (int r = col + 1; r < p; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (m[piv][col] == 0.0) fail(ErrorKind::unsupported_stencil, "singular stencil system");
    std::swap(m[col], m[piv]);
    for (int r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c <= p; ++c) m[r][c] -= f * m[col][c];
    }
  }
  std::vector<double> alpha(p);
  for (int i = 0; i < p; ++i) alpha[i] = m[i][p] / m[i][i];
  return alpha;
}

}  // namespace

std::vector<Rational> exact_stencil_coefficients(int points, StencilKind kind) {
  if (kind == StencilKind::symmetric) {
    if (points != 3)
      fail(ErrorKind::unsupported_stencil, "symmetric stencil is only defined for 3 points");
    return {Rational(-1, 2), Rational(0), Rational(1, 2)};
  }
  if (points < 2)
    fail(ErrorKind::unsupported_stencil, "forward stencil needs at least 2 points");
  if (points > 8)
    fail(ErrorKind::unsupported_stencil, "exact coefficients are kept rational only up to 8 points");
  return solve_vandermonde_exact(points);
}

FDStencil solve_fd_stencil(int points, StencilKind kind) {
  FDStencil s;
  s.kind = kind;
  s.points = points;
  if (kind == StencilKind::symmetric) {
    if (points != 3)
      fail(ErrorKind::unsupported_stencil, "symmetric stencil is only defined for 3 points");
    s.coefficients = {-0.5, 0.0, 0.5};
    s.nodes = {-1, 0, 1};
    return s;
  }
  if (points < 2)
    fail(ErrorKind::unsupported_stencil, "forward stencil needs at least 2 points");
  if (points <= 8) {
    for (const Rational& r : exact_stencil_coefficients(points, kind))
      s.coefficients.push_back(r.value());
  } else {
    s.coefficients = solve_vandermonde_double(points);
  }
  for (int i = 0; i < points; ++i) s.nodes.push_back(i);
  return s;
}

FDStencil with_step(FDStencil s, double step) {
  if (!(step > 0.0)) fail(ErrorKind::non_positive_beta, "stencil step must be > 0");
  s.step = step;
  return s;
}

}  // namespace bilevel
