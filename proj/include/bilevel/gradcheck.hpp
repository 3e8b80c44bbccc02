#pragma once

#include "bilevel/problem.hpp"

namespace bilevel {

// Max guarded relative error ||analytic - fd|| / (1 + ||analytic||) for each
// derivative callback, measured against central differences at (phi, theta).
struct GradCheckReport {
  double grad_phi_inner = 0.0;
  double grad_theta_inner = 0.0;
  double grad_phi_outer = 0.0;
  double grad_theta_outer = 0.0;
  double hvp_inner = 0.0;        // vs differenced grad_phi_inner, random probes
  double cross_vjp_inner = 0.0;  // vs theta-gradient of <v, grad_phi_inner>
  double worst() const;
};

GradCheckReport check_gradients(const BilevelProblem& p, const Vec& phi, const Vec& theta,
                                double h = 1e-5, int probes = 3, std::uint64_t seed = 0);

}  // namespace bilevel
