#include "pafl/numerics.hpp"

#include <cmath>
#include <cstring>

namespace pafl {

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void require_finite(const Vec& v, const char* what) {
  if (!all_finite(v)) throw NumericsError(std::string(what) + ": non-finite entry");
}

void require_same_size(const Vec& x, const Vec& y, const char* what) {
  if (x.size() != y.size())
    throw NumericsError(std::string(what) + ": length mismatch (" + std::to_string(x.size()) +
                        " vs " + std::to_string(y.size()) + ")");
}

Vec zeros(std::size_t d) { return Vec(d, 0.0); }

Vec axpy(double a, const Vec& x, const Vec& y) {
  require_same_size(x, y, "axpy");
  Vec out(y);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += a * x[i];
  require_finite(out, "axpy");
  return out;
}

void axpy_into(double a, const Vec& x, Vec& y) {
  require_same_size(x, y, "axpy_into");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vec sub(const Vec& x, const Vec& y) {
  require_same_size(x, y, "sub");
  Vec out(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] -= y[i];
  return out;
}

Vec add(const Vec& x, const Vec& y) {
  require_same_size(x, y, "add");
  Vec out(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += y[i];
  return out;
}

Vec scaled(double a, const Vec& x) {
  Vec out(x);
  for (double& v : out) v *= a;
  return out;
}

double dot(const Vec& x, const Vec& y) {
  require_same_size(x, y, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm_sq(const Vec& x) { return dot(x, x); }
double norm(const Vec& x) { return std::sqrt(norm_sq(x)); }
double dist(const Vec& x, const Vec& y) { return norm(sub(x, y)); }

std::uint64_t hash_vec(const Vec& v) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w, double h) {
  if (!(h > 0.0)) throw NumericsError("fd_gradient: h must be positive");
  Vec g(w.size(), 0.0);
  Vec probe = w;
  for (std::size_t j = 0; j < w.size(); ++j) {
    double wj = w[j];
    probe[j] = wj + h;
    double fp = f(probe);
    probe[j] = wj - h;
    double fm = f(probe);
    probe[j] = wj;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericsError("fd_gradient: non-finite evaluation");
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace pafl
