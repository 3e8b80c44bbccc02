#include "bilevel/vec.hpp"

#include <cmath>
#include <cstdio>

#include "bilevel/errors.hpp"
#include "bilevel/kernels.hpp"

namespace bilevel {

Vec::Vec(std::initializer_list<double> xs) : d_(xs) { require_finite(*this, "Vec literal"); }

Vec Vec::from(std::vector<double> xs) {
  Vec v;
  v.d_ = std::move(xs);
  require_finite(v, "Vec::from");
  return v;
}

bool Vec::all_finite() const {
  for (double x : d_)
    if (!std::isfinite(x)) return false;
  return true;
}

void require_dim(const Vec& a, std::size_t n, const char* what) {
  if (a.size() != n)
    fail(ErrorKind::dim_mismatch,
         std::string(what) + ": got dim " + std::to_string(a.size()) + ", want " + std::to_string(n));
}

void require_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size())
    fail(ErrorKind::dim_mismatch,
         std::string(what) + ": dims " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

void require_finite(const Vec& a, const char* what) {
  if (!a.all_finite()) fail(ErrorKind::non_finite, std::string(what) + ": vector has NaN/Inf entries");
}

double dot(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "dot");
  double r = kernels::dot(a.data(), b.data(), a.size());
  if (!std::isfinite(r)) fail(ErrorKind::non_finite, "dot: non-finite result");
  return r;
}

double norm_sq(const Vec& a) {
  double r = kernels::sum_sq(a.data(), a.size());
  if (!std::isfinite(r)) fail(ErrorKind::non_finite, "norm_sq: non-finite result");
  return r;
}

double norm(const Vec& a) { return std::sqrt(norm_sq(a)); }

Vec add(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "add");
  Vec out(a.size());
  kernels::add(a.data(), b.data(), out.data(), a.size());
  require_finite(out, "add");
  return out;
}

Vec sub(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "sub");
  Vec out(a.size());
  kernels::sub(a.data(), b.data(), out.data(), a.size());
  require_finite(out, "sub");
  return out;
}

Vec scaled(const Vec& a, double s) {
  Vec out(a.size());
  kernels::scale(s, a.data(), out.data(), a.size());
  require_finite(out, "scaled");
  return out;
}

void axpy_into(Vec& y, double a, const Vec& x) {
  require_same_dim(y, x, "axpy");
  kernels::axpy(a, x.data(), y.data(), y.size());
  require_finite(y, "axpy");
}

std::string to_string(const Vec& a) {
  std::string s = "[";
  char buf[40];
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", a[i]);
    if (i) s += ", ";
    s += buf;
  }
  s += "]";
  return s;
}

}  // namespace bilevel
