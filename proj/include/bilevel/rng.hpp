#pragma once

#include <cmath>
#include <cstdint>

#include "bilevel/vec.hpp"

namespace bilevel {

// splitmix64 stream. Self-contained on purpose: the sweep harness promises
// byte-identical output for a given seed regardless of thread count, which is
// easiest to keep with an owned generator whose streams derive from
// (master seed, cell index) instead of from call order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1]; never 0 so it is safe under log.
  double uniform() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // One Box-Muller draw per call (the twin is discarded; call-count stays in
  // lockstep with the stream).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Vec gaussian_vec(std::size_t n, double sigma = 1.0) {
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = sigma * normal();
    return v;
  }

  // Uniform direction on the unit sphere.
  Vec unit_vec(std::size_t n) {
    for (;;) {
      Vec v = gaussian_vec(n);
      const double r = norm(v);
      if (r > 1e-12) return scaled(v, 1.0 / r);
    }
  }

  // Decorrelated child seed for a named substream.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    Rng r(master ^ (0x632BE59BD9B4E019ull + 0x9E3779B97F4A7C15ull * stream));
    r.next_u64();
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace bilevel
