#include "bilevel/numdiff.hpp"

#include <cmath>

#include "bilevel/errors.hpp"

namespace bilevel {

Vec central_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::non_positive_value, "central_diff_grad: h must be > 0");
  Vec g(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    probe[i] = xi + h;
    const double fp = f(probe);
    probe[i] = xi - h;
    const double fm = f(probe);
    probe[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      fail(ErrorKind::non_finite, "central_diff_grad: non-finite function value");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double fit_loglog_slope(std::span<const std::pair<double, double>> pts) {
  if (pts.size() < 3)
    fail(ErrorKind::insufficient_points, "fit_loglog_slope: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    if (!(x > 0.0) || !(y > 0.0))
      fail(ErrorKind::non_positive_value, "fit_loglog_slope: coordinates must be > 0");
    mx += std::log(x);
    my += std::log(y);
  }
  const double n = static_cast<double>(pts.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  if (sxx <= 0.0)
    fail(ErrorKind::insufficient_points, "fit_loglog_slope: abscissae are all equal");
  return sxy / sxx;
}

}  // namespace bilevel
