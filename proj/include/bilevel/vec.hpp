#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace bilevel {

// Dense real vector. Construction from data and all the arithmetic helpers
// below enforce the no-NaN/no-Inf contract; a violation raises NonFinite
// instead of letting poison propagate silently.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n) : d_(n, 0.0) {}
  Vec(std::initializer_list<double> xs);
  static Vec zeros(std::size_t n) { return Vec(n); }
  static Vec from(std::vector<double> xs);  // validates finiteness

  std::size_t size() const { return d_.size(); }
  double operator[](std::size_t i) const { return d_[i]; }
  double& operator[](std::size_t i) { return d_[i]; }
  const double* data() const { return d_.data(); }
  double* data() { return d_.data(); }
  const std::vector<double>& raw() const { return d_; }

  bool all_finite() const;
  bool operator==(const Vec& o) const { return d_ == o.d_; }

 private:
  std::vector<double> d_;
};

void require_dim(const Vec& a, std::size_t n, const char* what);
void require_same_dim(const Vec& a, const Vec& b, const char* what);
void require_finite(const Vec& a, const char* what);

double dot(const Vec& a, const Vec& b);
double norm_sq(const Vec& a);
double norm(const Vec& a);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scaled(const Vec& a, double s);
void axpy_into(Vec& y, double a, const Vec& x);  // y += a*x, validated

std::string to_string(const Vec& a);

}  // namespace bilevel
