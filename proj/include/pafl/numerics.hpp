#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pafl {

// Dense model coordinates; length is fixed by the task dimension.
using Vec = std::vector<double>;

struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool all_finite(const Vec& v);
void require_finite(const Vec& v, const char* what);
void require_same_size(const Vec& x, const Vec& y, const char* what);

Vec zeros(std::size_t d);

// a*x + y
Vec axpy(double a, const Vec& x, const Vec& y);
// in place: y += a*x
void axpy_into(double a, const Vec& x, Vec& y);

Vec sub(const Vec& x, const Vec& y);
Vec add(const Vec& x, const Vec& y);
Vec scaled(double a, const Vec& x);
double dot(const Vec& x, const Vec& y);
double norm(const Vec& x);
double norm_sq(const Vec& x);
double dist(const Vec& x, const Vec& y);

// FNV-1a over the raw bytes of the doubles; used for snapshot identity checks.
std::uint64_t hash_vec(const Vec& v);

// Central-difference gradient, the oracle every analytic gradient is checked
// against.  h defaults to 1e-5: a good truncation/rounding balance for the
// smooth double-precision test fields used here.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w, double h = 1e-5);

}  // namespace pafl
