#pragma once

#include <functional>
#include <span>
#include <utility>

#include "bilevel/vec.hpp"

namespace bilevel {

// Central-difference gradient of a scalar function, component by component.
// Raises NonPositiveValue for h <= 0 and NonFinite if any evaluation is not
// finite.
Vec central_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h);

// Least-squares slope of log(y) against log(x). Needs at least 3 points with
// at least 2 distinct abscissae (InsufficientPoints otherwise) and strictly
// positive coordinates (NonPositiveValue).
double fit_loglog_slope(std::span<const std::pair<double, double>> pts);

}  // namespace bilevel
