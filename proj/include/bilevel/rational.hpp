#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "bilevel/errors.hpp"

namespace bilevel {

// Exact fraction over 64-bit integers, with 128-bit intermediates. Only used
// for the small Vandermonde eliminations behind stencil coefficients, where
// magnitudes stay tiny; overflow raises instead of wrapping.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n) : num(n) {}
  Rational(std::int64_t n, std::int64_t d) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den == 0) fail(ErrorKind::non_positive_value, "Rational: zero denominator");
    if (den < 0) { num = -num; den = -den; }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
  }

  static Rational from128(__int128 n, __int128 d) {
    if (d < 0) { n = -n; d = -d; }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b) { __int128 t = a % b; a = b; b = t; }
    if (a > 1) { n /= a; d /= a; }
    const __int128 lim = INT64_MAX;
    if (n > lim || n < -lim || d > lim)
      fail(ErrorKind::non_positive_value, "Rational: overflow");
    return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return from128((__int128)a.num * b.den + (__int128)b.num * a.den, (__int128)a.den * b.den);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return from128((__int128)a.num * b.den - (__int128)b.num * a.den, (__int128)a.den * b.den);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from128((__int128)a.num * b.num, (__int128)a.den * b.den);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num == 0) fail(ErrorKind::non_positive_value, "Rational: division by zero");
    return from128((__int128)a.num * b.den, (__int128)a.den * b.num);
  }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }

  bool is_zero() const { return num == 0; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string to_string() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }
};

}  // namespace bilevel
