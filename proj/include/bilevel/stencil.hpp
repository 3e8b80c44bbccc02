#pragma once

#include <vector>

#include "bilevel/rational.hpp"

namespace bilevel {

enum class StencilKind { forward, symmetric };

const char* to_string(StencilKind k);
StencilKind stencil_kind_from_string(const std::string& s);

// First-derivative finite-difference stencil on integer node multiples of a
// common step. Coefficients satisfy sum(alpha_i) = 0 and sum(alpha_i * n_i) = 1,
// so applied to f at points n_i * step and divided by step it estimates f'(0).
struct FDStencil {
  StencilKind kind = StencilKind::forward;
  int points = 0;
  std::vector<double> coefficients;
  std::vector<int> nodes;  // forward: 0..p-1; symmetric: -1, 0, +1
  double step = 0.0;       // attached later via with_step; 0 means unset
};

// Coefficients for the p-point forward stencil (nodes 0..p-1) come from the
// Vandermonde moment system sum_i alpha_i * i^k = [k == 1], k = 0..p-1, solved
// in exact rational arithmetic for p <= 8 and in double precision with partial
// pivoting beyond. The symmetric kind is the hard-coded 3-point rule
// (-1/2, 0, 1/2). Raises UnsupportedStencil for p < 2 (forward) or p != 3
// (symmetric).
FDStencil solve_fd_stencil(int points, StencilKind kind);

// Exact rational coefficients; forward requires 2 <= p <= 8.
std::vector<Rational> exact_stencil_coefficients(int points, StencilKind kind);

// Returns a copy with the step attached; step must be > 0.
FDStencil with_step(FDStencil s, double step);

}  // namespace bilevel
