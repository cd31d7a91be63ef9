#include <doctest.h>

#include <cmath>

#include "pafl/estimators.hpp"
#include "pafl/federation.hpp"

using namespace pafl;

namespace {

// 1-d least squares: f(w) = (a/2) w^2 (minimizer 0, curvature a).
ClientTask make_1d(double a, double noise = 0.0) {
  ClientTask t;
  t.client_id = 0;
  t.kind = TaskKind::kQuadratic;
  t.dim = 1;
  t.noise_scale = noise;
  t.quad.A = Eigen::MatrixXd::Constant(1, 1, std::sqrt(a));
  t.quad.w_star = Eigen::VectorXd::Zero(1);
  t.quad.b = Eigen::VectorXd::Zero(1);
  t.quad.H = Eigen::MatrixXd::Constant(1, 1, a);
  return t;
}

// Scalar bisection on the prox stationarity a*theta + lambda*(theta - w) = 0;
// independent oracle for the linear-solve path.
double prox_bisect(double a, double lambda, double w) {
  auto g = [&](double th) { return a * th + lambda * (th - w); };
  double lo = w - 10.0, hi = w + 10.0;
  REQUIRE(g(lo) * g(hi) < 0.0);
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (g(lo) * g(mid) <= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("1-d MAML gradient matches the closed form") {
  // grad F(w) = a (1 - alpha a)^2 w; a=2, alpha=0.1, w=1 -> 1.28
  ClientTask t = make_1d(2.0);
  Vec g = maml_full_grad(t, {1.0}, 0.1);
  CHECK(g[0] == doctest::Approx(1.28).epsilon(1e-14));
  // alpha = 0 reduces to the plain gradient
  CHECK(maml_full_grad(t, {1.0}, 0.0)[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("1-d prox: closed form, bisection oracle, and linear solve agree") {
  // theta_hat = lambda w / (a + lambda); a=1, lambda=10, w=1.1 -> 1.0
  ClientTask t = make_1d(1.0);
  double bisect = prox_bisect(1.0, 10.0, 1.1);
  CHECK(bisect == doctest::Approx(1.0).epsilon(1e-10));
  Vec prox = moreau_prox_exact(t, {1.1}, 10.0);
  CHECK(prox[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(prox[0] - bisect) < 1e-10);
  // grad F^(c)(w) = lambda a w / (a + lambda) = 1.0
  Vec g = moreau_grad_exact(t, {1.1}, 10.0);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stochastic prox path honors its stopping rules") {
  ClientTask t = make_1d(2.0);
  OptionC rule;
  rule.lambda = 10.0;
  rule.batch = 1;

  SUBCASE("grad_norm stop reaches the residual target") {
    rule.inner_stop = InnerStop::kGradNorm;
    rule.nu = 1e-9;
    auto streams = make_estimator_streams(1, 0, 0);
    GradEstimate est = moreau_grad_stoch(t, {1.1}, rule, streams);
    CHECK(est.inner_residual <= 1e-9);
    CHECK(est.batches_consumed == 1);
  }
  SUBCASE("fixed_steps stop runs exactly K steps") {
    rule.inner_stop = InnerStop::kFixedSteps;
    rule.inner_steps = 4;
    auto streams = make_estimator_streams(1, 0, 0);
    GradEstimate est = moreau_grad_stoch(t, {1.1}, rule, streams);
    CHECK(est.inner_steps == 4);
  }
  SUBCASE("both stops at whichever triggers first") {
    rule.inner_stop = InnerStop::kBoth;
    rule.inner_steps = 3;
    rule.nu = 0.0;  // unreachable target -> the step cap binds
    auto streams = make_estimator_streams(1, 0, 0);
    GradEstimate est = moreau_grad_stoch(t, {1.1}, rule, streams);
    CHECK(est.inner_steps == 3);
  }
}

TEST_CASE("huge lambda with tiny nu stays numerically clean") {
  // offset-coordinate inner solve: no cancellation at lambda = 1e6 L
  ClientTask t = make_1d(2.0, 0.0);
  OptionC rule;
  rule.lambda = 2e6;
  rule.nu = 1e-12;
  rule.inner_stop = InnerStop::kGradNorm;
  auto streams = make_estimator_streams(1, 0, 0);
  GradEstimate est = moreau_grad_stoch(t, {0.7}, rule, streams);
  // grad -> plain gradient a*w as lambda -> infinity
  CHECK(est.vector[0] == doctest::Approx(2.0 * 0.7 * rule.lambda / (2.0 + rule.lambda))
                             .epsilon(1e-10));
  CHECK(std::abs(est.vector[0] - 1.4) / 1.4 < 1e-3);
}

TEST_CASE("Q local steps match an unrolled SGD oracle") {
  ClientTask t = make_1d(0.8);
  OptionA rule;
  rule.eta = 0.05;
  auto streams = make_estimator_streams(9, 0, 0);
  LocalRun run = client_local_run(t, {2.0}, rule, 3, streams, 0);

  // unroll by hand with the same primitive order
  Vec w{2.0};
  auto oracle_streams = make_estimator_streams(9, 0, 0);
  for (int k = 0; k < 3; ++k) {
    DataBatch b = sample_batch(t, 1, oracle_streams.main);
    w = axpy(-0.05, batch_grad(t, w, b), w);
  }
  Vec delta = sub(Vec{2.0}, w);
  CHECK(run.delta[0] == delta[0]);  // bitwise
  CHECK(run.batches_consumed == 3);
  CHECK(run.q == 3);
}

TEST_CASE("Option B with alpha = 0 reduces to Option A bitwise") {
  ClientTask t = make_1d(1.5, 0.4);
  OptionA a;
  a.eta = 0.02;
  a.batch = 2;
  OptionB b;
  b.eta = 0.02;
  b.alpha = 0.0;
  b.batch = 2;
  b.batch_inner = 2;
  b.batch_hess = 2;

  for (std::uint64_t cycle = 0; cycle < 5; ++cycle) {
    auto sa = make_estimator_streams(77, 3, cycle);
    auto sb = make_estimator_streams(77, 3, cycle);
    LocalRun ra = client_local_run(t, {1.0}, a, 4, sa, 0);
    LocalRun rb = client_local_run(t, {1.0}, b, 4, sb, 0);
    CHECK(ra.delta == rb.delta);  // bitwise: same purpose-stream for D
  }
}

TEST_CASE("MAML stochastic gradient is unbiased on additive-noise quadratics") {
  ClientTask t = make_1d(2.0, 0.5);
  OptionB rule;
  rule.alpha = 0.2;
  rule.hvp_mode = HvpMode::kExact;
  Vec truth = maml_full_grad(t, {1.0}, 0.2);
  const int draws = 40000;
  double mean = 0.0, second = 0.0;
  for (int k = 0; k < draws; ++k) {
    auto streams = make_estimator_streams(5, 0, static_cast<std::uint64_t>(k));
    GradEstimate est = maml_stoch_grad(t, {1.0}, rule, streams);
    CHECK(est.batches_consumed == 3);
    mean += (est.vector[0] - truth[0]) / draws;
    double dv = est.vector[0] - truth[0];
    second += dv * dv / draws;
  }
  double se = std::sqrt(second / draws);
  CHECK(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("first-order HVP tracks the exact HVP closely") {
  ClientTask t = make_1d(2.0, 0.3);
  OptionB exact;
  exact.alpha = 0.15;
  exact.hvp_mode = HvpMode::kExact;
  OptionB fo = exact;
  fo.hvp_mode = HvpMode::kFirstOrder;
  auto s1 = make_estimator_streams(6, 0, 0);
  auto s2 = make_estimator_streams(6, 0, 0);
  Vec ge = maml_stoch_grad(t, {0.9}, exact, s1).vector;
  Vec gf = maml_stoch_grad(t, {0.9}, fo, s2).vector;
  CHECK(std::abs(ge[0] - gf[0]) < 1e-6 * std::max(1.0, std::abs(ge[0])));
  // dropped-HVP differs once alpha > 0
  OptionB drop = exact;
  drop.hvp_mode = HvpMode::kDropped;
  auto s3 = make_estimator_streams(6, 0, 0);
  Vec gd = maml_stoch_grad(t, {0.9}, drop, s3).vector;
  CHECK(std::abs(gd[0] - ge[0]) > 1e-6);
}

TEST_CASE("divergence guard fires on unstable stepsizes") {
  ClientTask t = make_1d(4.0);
  OptionA rule;
  rule.eta = 10.0;  // way past 2/L: local iterates blow up
  auto streams = make_estimator_streams(1, 0, 0);
  CHECK_THROWS_AS(client_local_run(t, {1.0}, rule, 2000, streams, 0), DivergenceError);
}
