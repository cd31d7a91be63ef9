#include <doctest.h>

#include <cmath>

#include "pafl/numerics.hpp"
#include "pafl/rng.hpp"

using namespace pafl;

TEST_CASE("axpy matches hand-computed values") {
  // -2 * (1,1) + (5,5) = (3,3)
  Vec out = axpy(-2.0, {1.0, 1.0}, {5.0, 5.0});
  CHECK(out == Vec{3.0, 3.0});
  CHECK(axpy(0.0, {7.0}, {2.0}) == Vec{2.0});
}

TEST_CASE("axpy_into accumulates in place") {
  Vec y{1.0, 2.0};
  axpy_into(3.0, {10.0, 20.0}, y);
  CHECK(y == Vec{31.0, 62.0});
}

TEST_CASE("basic vector algebra") {
  CHECK(dot({1.0, 2.0}, {3.0, 4.0}) == 11.0);
  CHECK(norm({3.0, 4.0}) == 5.0);
  CHECK(norm_sq({3.0, 4.0}) == 25.0);
  CHECK(dist({1.0, 1.0}, {4.0, 5.0}) == 5.0);
  CHECK(sub({5.0, 5.0}, {2.0, 3.0}) == Vec{3.0, 2.0});
  CHECK(add({5.0, 5.0}, {2.0, 3.0}) == Vec{7.0, 8.0});
  CHECK(scaled(-1.0, {1.0, -2.0}) == Vec{-1.0, 2.0});
}

TEST_CASE("size mismatches are rejected") {
  CHECK_THROWS_AS(axpy(1.0, {1.0}, {1.0, 2.0}), NumericsError);
  CHECK_THROWS_AS(dot({1.0}, {1.0, 2.0}), NumericsError);
}

TEST_CASE("non-finite results are rejected") {
  double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(axpy(1.0, {inf}, {1.0}), NumericsError);
  CHECK_THROWS_AS(require_finite({std::nan("")}, "test"), NumericsError);
}

TEST_CASE("hash_vec is deterministic and sensitive") {
  Vec a{1.0, 2.0, 3.0};
  CHECK(hash_vec(a) == hash_vec(a));
  Vec b = a;
  b[2] = std::nextafter(b[2], 4.0);
  CHECK(hash_vec(a) != hash_vec(b));
  // +0.0 and -0.0 have different bit patterns; the hash is over bits
  CHECK(hash_vec({0.0}) != hash_vec({-0.0}));
}

TEST_CASE("fd_gradient reproduces an analytic gradient") {
  // f(w) = w0^2 + 3 w0 w1, grad at (1,2) = (8, 3)
  auto f = [](const Vec& w) { return w[0] * w[0] + 3.0 * w[0] * w[1]; };
  Vec g = fd_gradient(f, {1.0, 2.0});
  CHECK(std::abs(g[0] - 8.0) < 1e-8);
  CHECK(std::abs(g[1] - 3.0) < 1e-8);
}

TEST_CASE("fd_gradient guards its inputs") {
  auto f = [](const Vec&) { return std::nan(""); };
  CHECK_THROWS_AS(fd_gradient(f, {1.0}), NumericsError);
  auto ok = [](const Vec& w) { return w[0]; };
  CHECK_THROWS_AS(fd_gradient(ok, {1.0}, 0.0), NumericsError);
}

TEST_CASE("derived streams are independent and reproducible") {
  RngStream a = derive_stream(42, {1, 2, 3});
  RngStream a2 = derive_stream(42, {1, 2, 3});
  RngStream b = derive_stream(42, {1, 2, 4});
  CHECK(a.next_u64() == a2.next_u64());
  RngStream a3 = derive_stream(42, {1, 2, 3});
  CHECK(a3.next_u64() != b.next_u64());
}

TEST_CASE("rng outputs fall in their stated ranges") {
  RngStream s = derive_stream(7, {1});
  for (int i = 0; i < 1000; ++i) {
    double u = s.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    double v = s.next_uniform(2.0, 3.0);
    CHECK(v >= 2.0);
    CHECK(v < 3.0);
    CHECK(s.next_exponential(1.5) >= 0.0);
    CHECK(s.next_below(10) < 10);
  }
}

TEST_CASE("normal draws have plausible first moments") {
  RngStream s = derive_stream(11, {2});
  double mean = 0.0, var = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = s.next_normal();
    mean += x / n;
    var += x * x / n;
  }
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}
