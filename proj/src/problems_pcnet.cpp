#include <cmath>

#include "bilevel/kernels.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

namespace {
inline double act(double z) { return std::tanh(z); }
inline double act_d(double z) { const double t = std::tanh(z); return 1.0 - t * t; }
inline double act_dd(double z) { const double t = std::tanh(z); return -2.0 * t * (1.0 - t * t); }
}  // namespace

namespace {
// Per-call scratch: pre-activations a^l = W^l phi^l + b^l, post-activations
// z^l = tanh(a^l), slopes s^l, and prediction errors r^0 = phi^0 - x,
// r^(l+1) = phi^(l+1) - z^l.
struct Views {
  std::vector<std::vector<double>> a, z, s, r;
};
}  // namespace

PredictiveCodingNet::PredictiveCodingNet(std::vector<std::size_t> layers, Vec x, Vec y)
    : layers_(std::move(layers)), x_(std::move(x)), y_(std::move(y)) {
  if (layers_.size() < 2)
    fail(ErrorKind::config, "PredictiveCodingNet: need at least an input and an output layer");
  for (std::size_t n : layers_)
    if (n == 0) fail(ErrorKind::config, "PredictiveCodingNet: zero-width layer");
  require_dim(x_, layers_.front(), "pcnet x");
  require_dim(y_, layers_.back(), "pcnet y");
  theta0_ = Vec::zeros(theta_dim());
}

PredictiveCodingNet PredictiveCodingNet::random(std::uint64_t seed, std::vector<std::size_t> layers) {
  Rng rng(Rng::derive(seed, 0xbc2));
  if (layers.size() < 2) fail(ErrorKind::config, "PredictiveCodingNet: need >= 2 layers");
  const Vec x = rng.gaussian_vec(layers.front());
  PredictiveCodingNet net(layers, x, Vec::zeros(layers.back()));

  auto draw_theta = [&]() {
    Vec th(net.theta_dim());
    std::size_t o = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const double scale = 1.0 / std::sqrt(double(layers[l]));
      for (std::size_t i = 0; i < layers[l + 1] * layers[l]; ++i) th[o++] = scale * rng.normal();
      for (std::size_t i = 0; i < layers[l + 1]; ++i) th[o++] = 0.1 * rng.normal();
    }
    return th;
  };
  net.theta0_ = draw_theta();
  // Target from an independent weight draw: reachable in scale, but not the
  // net's own forward output.
  const Vec theta_alt = draw_theta();
  net.y_ = net.output_layer(net.forward_pass(theta_alt));
  return net;
}

std::size_t PredictiveCodingNet::phi_dim() const {
  std::size_t n = 0;
  for (std::size_t w : layers_) n += w;
  return n;
}

std::size_t PredictiveCodingNet::theta_dim() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
    n += layers_[l + 1] * layers_[l] + layers_[l + 1];
  return n;
}

Vec PredictiveCodingNet::output_layer(const Vec& phi) const {
  require_dim(phi, phi_dim(), "phi");
  Vec out(layers_.back());
  const std::size_t off = phi_dim() - layers_.back();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi[off + i];
  return out;
}

Vec PredictiveCodingNet::forward_pass(const Vec& theta) const { return forward_pass(theta, x_); }

Vec PredictiveCodingNet::forward_pass(const Vec& theta, const Vec& x) const {
  require_dim(theta, theta_dim(), "theta");
  require_dim(x, layers_.front(), "x");
  Vec phi(phi_dim());
  for (std::size_t i = 0; i < x.size(); ++i) phi[i] = x[i];
  std::size_t phi_off = 0, th_off = 0;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const std::size_t n_in = layers_[l], n_out = layers_[l + 1];
    std::vector<double> a(n_out);
    kernels::gemv(theta.data() + th_off, n_out, n_in, phi.data() + phi_off, a.data());
    th_off += n_out * n_in;
    for (std::size_t i = 0; i < n_out; ++i)
      phi[phi_off + n_in + i] = act(a[i] + theta[th_off + i]);
    th_off += n_out;
    phi_off += n_in;
  }
  require_finite(phi, "forward_pass");
  return phi;
}

namespace {
// Walk the (W^l, b^l) blocks of theta alongside the phi^l blocks.
struct LayerCursor {
  std::size_t phi_off = 0, w_off = 0, b_off = 0;
  std::size_t n_in = 0, n_out = 0;
};
}  // namespace

#define FOR_LAYERS(l, cur)                                                        \
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l)                            \
    if (LayerCursor cur = layer_cursor(layers_, l); true)

static LayerCursor layer_cursor(const std::vector<std::size_t>& layers, std::size_t l) {
  LayerCursor c;
  for (std::size_t k = 0; k < l; ++k) {
    c.phi_off += layers[k];
    c.w_off += layers[k + 1] * layers[k] + layers[k + 1];
  }
  c.n_in = layers[l];
  c.n_out = layers[l + 1];
  c.b_off = c.w_off + c.n_out * c.n_in;
  return c;
}

static void fill_views(const std::vector<std::size_t>& layers_, const Vec& phi, const Vec& theta,
                       const Vec& x_, Views& v) {
  const std::size_t nl = layers_.size() - 1;
  v.a.resize(nl);
  v.z.resize(nl);
  v.s.resize(nl);
  v.r.resize(nl + 1);
  v.r[0].resize(layers_[0]);
  kernels::sub(phi.data(), x_.data(), v.r[0].data(), layers_[0]);
  FOR_LAYERS(l, cur) {
    v.a[l].resize(cur.n_out);
    v.z[l].resize(cur.n_out);
    v.s[l].resize(cur.n_out);
    v.r[l + 1].resize(cur.n_out);
    kernels::gemv(theta.data() + cur.w_off, cur.n_out, cur.n_in, phi.data() + cur.phi_off,
                  v.a[l].data());
    for (std::size_t i = 0; i < cur.n_out; ++i) {
      v.a[l][i] += theta[cur.b_off + i];
      v.z[l][i] = act(v.a[l][i]);
      v.s[l][i] = act_d(v.a[l][i]);
      v.r[l + 1][i] = phi[cur.phi_off + cur.n_in + i] - v.z[l][i];
    }
  }
}

double PredictiveCodingNet::inner_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  Views v;
  fill_views(layers_, phi, theta, x_, v);
  double e = 0.0;
  for (const auto& r : v.r) e += 0.5 * kernels::sum_sq(r.data(), r.size());
  if (!std::isfinite(e)) fail(ErrorKind::non_finite, "pcnet energy");
  return e;
}

double PredictiveCodingNet::outer_loss(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  const Vec top = output_layer(phi);
  return 0.5 * norm_sq(sub(top, y_));
}

Vec PredictiveCodingNet::grad_phi_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  Views v;
  fill_views(layers_, phi, theta, x_, v);
  Vec g(phi_dim());
  for (std::size_t i = 0; i < layers_[0]; ++i) g[i] = v.r[0][i];
  FOR_LAYERS(l, cur) {
    // r^(l+1) lands on the phi^(l+1) block...
    for (std::size_t i = 0; i < cur.n_out; ++i) g[cur.phi_off + cur.n_in + i] += v.r[l + 1][i];
    // ...and backpropagates onto phi^l through the activation slope.
    std::vector<double> rs(cur.n_out), back(cur.n_in);
    for (std::size_t i = 0; i < cur.n_out; ++i) rs[i] = v.r[l + 1][i] * v.s[l][i];
    kernels::gemv_t(theta.data() + cur.w_off, cur.n_out, cur.n_in, rs.data(), back.data());
    for (std::size_t i = 0; i < cur.n_in; ++i) g[cur.phi_off + i] -= back[i];
  }
  require_finite(g, "pcnet grad_phi_inner");
  return g;
}

Vec PredictiveCodingNet::grad_theta_inner(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  Views v;
  fill_views(layers_, phi, theta, x_, v);
  Vec g(theta_dim());
  FOR_LAYERS(l, cur) {
    for (std::size_t i = 0; i < cur.n_out; ++i) {
      const double rs = v.r[l + 1][i] * v.s[l][i];
      kernels::axpy(-rs, phi.data() + cur.phi_off, g.data() + cur.w_off + i * cur.n_in, cur.n_in);
      g[cur.b_off + i] = -rs;
    }
  }
  require_finite(g, "pcnet grad_theta_inner");
  return g;
}

Vec PredictiveCodingNet::grad_phi_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  Vec g(phi_dim());
  const std::size_t off = phi_dim() - layers_.back();
  for (std::size_t i = 0; i < layers_.back(); ++i) g[off + i] = phi[off + i] - y_[i];
  require_finite(g, "pcnet grad_phi_outer");
  return g;
}

Vec PredictiveCodingNet::grad_theta_outer(const Vec& phi, const Vec& theta) const {
  check_args(phi, theta);
  return Vec::zeros(theta_dim());
}

Vec PredictiveCodingNet::hvp_inner(const Vec& phi, const Vec& theta, const Vec& vv) const {
  check_args(phi, theta);
  require_dim(vv, phi_dim(), "hvp v");
  Views v;
  fill_views(layers_, phi, theta, x_, v);
  Vec hv(phi_dim());
  for (std::size_t i = 0; i < layers_[0]; ++i) hv[i] = vv[i];  // dr^0 = v^0
  FOR_LAYERS(l, cur) {
    std::vector<double> da(cur.n_out), drs(cur.n_out), back(cur.n_in);
    kernels::gemv(theta.data() + cur.w_off, cur.n_out, cur.n_in, vv.data() + cur.phi_off, da.data());
    for (std::size_t i = 0; i < cur.n_out; ++i) {
      const double dr = vv[cur.phi_off + cur.n_in + i] - v.s[l][i] * da[i];
      hv[cur.phi_off + cur.n_in + i] += dr;
      // d(r*s) = dr*s + r*rho''(a)*da
      drs[i] = dr * v.s[l][i] + v.r[l + 1][i] * act_dd(v.a[l][i]) * da[i];
    }
    kernels::gemv_t(theta.data() + cur.w_off, cur.n_out, cur.n_in, drs.data(), back.data());
    for (std::size_t i = 0; i < cur.n_in; ++i) hv[cur.phi_off + i] -= back[i];
  }
  require_finite(hv, "pcnet hvp");
  return hv;
}

Vec PredictiveCodingNet::cross_vjp_inner(const Vec& phi, const Vec& theta, const Vec& vv) const {
  check_args(phi, theta);
  require_dim(vv, phi_dim(), "cross_vjp v");
  Views v;
  fill_views(layers_, phi, theta, x_, v);
  Vec g(theta_dim());
  FOR_LAYERS(l, cur) {
    std::vector<double> u(cur.n_out);
    kernels::gemv(theta.data() + cur.w_off, cur.n_out, cur.n_in, vv.data() + cur.phi_off, u.data());
    for (std::size_t i = 0; i < cur.n_out; ++i) {
      const double s = v.s[l][i];
      const double col = -vv[cur.phi_off + cur.n_in + i] * s + u[i] * s * s -
                         u[i] * v.r[l + 1][i] * act_dd(v.a[l][i]);
      // d/dW^l of <v, grad_phi E> = col * (phi^l)^T - (r^(l+1) . s^l) (v^l)^T
      kernels::axpy(col, phi.data() + cur.phi_off, g.data() + cur.w_off + i * cur.n_in, cur.n_in);
      kernels::axpy(-v.r[l + 1][i] * s, vv.data() + cur.phi_off,
                    g.data() + cur.w_off + i * cur.n_in, cur.n_in);
      g[cur.b_off + i] = col;
    }
  }
  require_finite(g, "pcnet cross_vjp");
  return g;
}

#undef FOR_LAYERS

}  // namespace bilevel
