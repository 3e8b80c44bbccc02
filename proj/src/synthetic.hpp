#pragma once

// Shared synthetic-data helpers for the regression problems. Gaussian designs,
// planted linear or sinusoid targets, additive Gaussian noise; everything a
// pure function of the Rng handed in.

#include <cmath>
#include <string>

#include "bilevel/errors.hpp"
#include "bilevel/mat.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::synth {

inline DenseMat gaussian_design(Rng& rng, std::size_t rows, std::size_t cols) {
  DenseMat x(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) x(i, j) = rng.normal() / std::sqrt(double(cols));
  return x;
}

inline Vec planted_targets(Rng& rng, const DenseMat& x, const Vec& w, double noise,
                           const std::string& target) {
  Vec y = matvec(x, w);
  if (target == "sinusoid") {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(3.0 * y[i]);
  } else if (target != "linear") {
    fail(ErrorKind::config, "unknown target kind '" + target + "' (want linear|sinusoid)");
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise * rng.normal();
  return y;
}

}  // namespace bilevel::synth
