#include "bilevel/errors.hpp"
#include "bilevel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/numdiff.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

namespace {
double rel_err(const Vec& analytic, const Vec& fd) {
  return norm(sub(analytic, fd)) / (1.0 + norm(analytic));
}
}  // namespace

double GradCheckReport::worst() const {
  return std::max({grad_phi_inner, grad_theta_inner, grad_phi_outer, grad_theta_outer, hvp_inner,
                   cross_vjp_inner});
}

GradCheckReport check_gradients(const BilevelProblem& p, const Vec& phi, const Vec& theta,
                                double h, int probes, std::uint64_t seed) {
  if (!(h > 0.0)) fail(ErrorKind::non_positive_value, "check_gradients: h must be > 0");
  GradCheckReport rep;

  auto in_phi = [&](const Vec& q) { return p.inner_loss(q, theta); };
  auto in_theta = [&](const Vec& q) { return p.inner_loss(phi, q); };
  auto out_phi = [&](const Vec& q) { return p.outer_loss(q, theta); };
  auto out_theta = [&](const Vec& q) { return p.outer_loss(phi, q); };

  rep.grad_phi_inner = rel_err(p.grad_phi_inner(phi, theta), central_diff_grad(in_phi, phi, h));
  rep.grad_theta_inner =
      rel_err(p.grad_theta_inner(phi, theta), central_diff_grad(in_theta, theta, h));
  rep.grad_phi_outer = rel_err(p.grad_phi_outer(phi, theta), central_diff_grad(out_phi, phi, h));
  rep.grad_theta_outer =
      rel_err(p.grad_theta_outer(phi, theta), central_diff_grad(out_theta, theta, h));

  Rng rng(Rng::derive(seed, 0x9c));
  for (int k = 0; k < probes; ++k) {
    const Vec v = rng.unit_vec(p.phi_dim());

    // H v against a central difference of grad_phi_inner along v.
    Vec phi_p = phi, phi_m = phi;
    axpy_into(phi_p, h, v);
    axpy_into(phi_m, -h, v);
    const Vec fd_hv =
        scaled(sub(p.grad_phi_inner(phi_p, theta), p.grad_phi_inner(phi_m, theta)), 0.5 / h);
    rep.hvp_inner = std::max(rep.hvp_inner, rel_err(p.hvp_inner(phi, theta, v), fd_hv));

    // v^T (d_theta d_phi L_in) against the theta-gradient of the scalar
    // theta -> <v, grad_phi_inner(phi, theta)>.
    auto pairing = [&](const Vec& q) { return dot(v, p.grad_phi_inner(phi, q)); };
    const Vec fd_cross = central_diff_grad(pairing, theta, h);
    rep.cross_vjp_inner =
        std::max(rep.cross_vjp_inner, rel_err(p.cross_vjp_inner(phi, theta, v), fd_cross));
  }
  return rep;
}

}  // namespace bilevel
