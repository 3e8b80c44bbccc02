#pragma once

#include <cstddef>
#include <memory>
#include <utility>

#include "bilevel/vec.hpp"

namespace bilevel {

// Callback bundle for a two-level objective pair: an inner loss minimized over
// phi for fixed theta, and an outer loss scored at that minimizer. Derivative
// conventions:
//   hvp_inner(phi, theta, v)      = (d2_phi L_in) v
//   cross_vjp_inner(phi, theta, v) = v^T (d_theta d_phi L_in), a theta-sized
//                                    vector; linear in v with zero mapping to
//                                    zero.
// All implementations are analytic; check_gradients() cross-validates each one
// against central differences.
class BilevelProblem {
 public:
  virtual ~BilevelProblem() = default;

  virtual std::size_t phi_dim() const = 0;
  virtual std::size_t theta_dim() const = 0;
  std::pair<std::size_t, std::size_t> dims() const { return {phi_dim(), theta_dim()}; }

  virtual double inner_loss(const Vec& phi, const Vec& theta) const = 0;
  virtual double outer_loss(const Vec& phi, const Vec& theta) const = 0;
  virtual Vec grad_phi_inner(const Vec& phi, const Vec& theta) const = 0;
  virtual Vec grad_theta_inner(const Vec& phi, const Vec& theta) const = 0;
  virtual Vec grad_phi_outer(const Vec& phi, const Vec& theta) const = 0;
  virtual Vec grad_theta_outer(const Vec& phi, const Vec& theta) const = 0;
  virtual Vec hvp_inner(const Vec& phi, const Vec& theta, const Vec& v) const = 0;
  virtual Vec cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& v) const = 0;

 protected:
  void check_args(const Vec& phi, const Vec& theta) const {
    require_dim(phi, phi_dim(), "phi");
    require_dim(theta, theta_dim(), "theta");
  }
};

}  // namespace bilevel
