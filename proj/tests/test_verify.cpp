#include <doctest.h>

#include <cmath>

#include "pafl/config.hpp"
#include "pafl/verify.hpp"

using namespace pafl;

namespace {

Fleet quad_fleet(int n, int dim, double het, double noise, std::uint64_t seed,
                 bool identity = false, double l_target = 1.0) {
  RngStream rng = derive_stream(seed, {static_cast<std::uint64_t>(StreamPurpose::kFleet)});
  FleetOptions opts;
  opts.noise_scale = noise;
  opts.identity_hessian = identity;
  opts.l_target = l_target;
  return make_fleet(TaskKind::kQuadratic, n, het, dim, rng, opts);
}

ProbeConfig fast_probe() {
  ProbeConfig p;
  p.probes = 100;
  p.mc_draws = 2000;
  p.seed = 2024;
  return p;
}

}  // namespace

TEST_CASE("lemma 5 smoothness margin on a quadratic fleet") {
  Fleet fleet = quad_fleet(4, 5, 1.0, 0.2, 61);
  double L = fleet_global_L(fleet);
  LemmaParams p;
  p.lambda = 10.0 * L;
  p.nu = 1e-8;
  BoundReport r = check_lemma("lemma5_smoothness_me", fleet, p, fast_probe());
  CHECK(r.analytic_constants);
  CHECK(r.bound == doctest::Approx((10.0 / 9.0) * L).epsilon(1e-10));
  CHECK(r.pass);
  CHECK(r.margin <= 1.0);
  CHECK(r.empirical_max > 0.0);
}

TEST_CASE("lemma 2 bias vanishes at alpha = 0") {
  Fleet fleet = quad_fleet(3, 4, 1.0, 0.3, 62);
  LemmaParams p;  // alpha = 0
  p.lambda = 10.0 * fleet_global_L(fleet);
  BoundReport r = check_lemma("lemma2_bias_maml", fleet, p, fast_probe());
  CHECK(r.bound == 0.0);
  CHECK(r.pass);  // empirical below the 3-standard-error noise floor
}

TEST_CASE("lemma 7 on a homogeneous fleet has both sides zero") {
  Fleet fleet = quad_fleet(4, 4, 0.0, 0.1, 63);
  double L = fleet_global_L(fleet);
  LemmaParams p;
  p.lambda = 10.0 * L;
  BoundReport r = check_lemma("lemma7_diversity_me", fleet, p, fast_probe());
  CHECK(r.bound == 0.0);
  CHECK(r.empirical_max == 0.0);
  CHECK(r.pass);
}

TEST_CASE("lemma 7 refuses lambda below 7L") {
  Fleet fleet = quad_fleet(3, 4, 1.0, 0.1, 64);
  LemmaParams p;
  p.lambda = 5.0 * fleet_global_L(fleet);
  CHECK_THROWS_WITH_AS(check_lemma("lemma7_diversity_me", fleet, p, fast_probe()),
                       doctest::Contains("7L"), NumericsError);
}

TEST_CASE("unknown bound names and empty budgets are rejected") {
  Fleet fleet = quad_fleet(2, 3, 1.0, 0.1, 65);
  LemmaParams p;
  p.lambda = 10.0 * fleet_global_L(fleet);
  CHECK_THROWS_AS(check_lemma("lemma99", fleet, p, fast_probe()), NumericsError);
  ProbeConfig none = fast_probe();
  none.probes = 0;
  CHECK_THROWS_WITH_AS(check_lemma("lemma1_smoothness_maml", fleet, p, none),
                       doctest::Contains("insufficient probes"), NumericsError);
}

TEST_CASE("all lemma margins pass on a quadratic fleet") {
  Fleet fleet = quad_fleet(4, 5, 1.0, 0.2, 66);
  double L = fleet_global_L(fleet);
  LemmaParams p;
  p.alpha = 0.5 / L;
  p.lambda = 10.0 * L;
  p.nu = 1e-8;
  p.b = 2;
  std::vector<BoundReport> reports = check_all_lemmas(fleet, p, fast_probe());
  REQUIRE(reports.size() == 9);
  for (const auto& r : reports) {
    INFO(r.name, " margin ", r.margin);
    CHECK(r.pass);
  }
  std::string table = bound_table(reports);
  CHECK(table.find("lemma5_smoothness_me") != std::string::npos);
  CHECK(table.find("FAIL") == std::string::npos);
}

TEST_CASE("limit coherence: alpha -> 0 collapses the MAML constants") {
  Fleet fleet = quad_fleet(3, 4, 1.0, 0.2, 67);
  double L = fleet_global_L(fleet);
  LemmaParams p;
  p.lambda = 10.0 * L;
  BoundReport r1 = check_lemma("lemma1_smoothness_maml", fleet, p, fast_probe());
  CHECK(r1.bound == doctest::Approx(L).epsilon(1e-12));
  BoundReport r3 = check_lemma("lemma3_diversity_maml", fleet, p, fast_probe());
  RngStream crng = derive_stream(1, {9});
  TaskConstants c = measure_constants(fleet, 200, crng);
  CHECK(r3.bound == doctest::Approx(12.0 * c.gamma_g * c.gamma_g).epsilon(1e-10));
}

TEST_CASE("theorem thresholds and stepsizes match the closed forms") {
  TaskConstants c;
  c.L = 0.5;
  // option A: 160 L (Q+7)(tau+1)^3
  CHECK(theorem_threshold(OptionA{}, c, 3, 1) == doctest::Approx(160.0 * 0.5 * 10.0 * 8.0));
  OptionB b;
  b.alpha = 2.0;  // L_b = L(1+alpha L)^2 = 0.5 * 4 = 2
  CHECK(theorem_threshold(b, c, 3, 1) == doctest::Approx(64.0 * 2.0));
  OptionC copt;
  copt.lambda = 5.0;  // L_c = 5*0.5/4.5
  CHECK(theorem_threshold(copt, c, 2, 1) ==
        doctest::Approx(288.0 * (2.5 / 4.5) * 9.0 * 4.0));
  CHECK(theorem_stepsize(OptionA{}, c, 4, 800) == doctest::Approx(1.0 / (4.0 * std::sqrt(400.0))));
}

TEST_CASE("fit_rate refuses horizons below the theorem threshold") {
  Fleet fleet = quad_fleet(1, 3, 0.0, 0.0, 68);
  RunLog log;
  log.metrics.resize(10);
  RngStream crng = derive_stream(1, {10});
  TaskConstants c = measure_constants(fleet, 200, crng);
  CHECK_THROWS_WITH_AS(fit_rate(log, 0, OptionA{}, c, 1), doctest::Contains("threshold"),
                       NumericsError);
}

TEST_CASE("fit_rate on deterministic gradient descent") {
  // single client, no noise, zero delays: the run is plain GD
  Fleet fleet = quad_fleet(1, 4, 1.0, 0.0, 69, true, 0.01);
  RngStream crng = derive_stream(1, {11});
  TaskConstants c = measure_constants(fleet, 200, crng);
  int horizon = 2000;
  OptionA rule;
  rule.eta = theorem_stepsize(OptionA{}, c, 1, horizon);
  DelayModel delays = DelayModel::constant(1, 0.0, 0.0);
  RunLog log = simulate_async(fleet, rule, 1, 1.0, delays, {horizon, 0.0}, 3, zeros(4));
  RateFit fit = fit_rate(log, 0, rule, c, 1);
  CHECK(fit.curve.size() == static_cast<std::size_t>(horizon));
  // running average is nonincreasing for deterministic GD
  for (std::size_t t = 1; t < fit.curve.size(); ++t) CHECK(fit.curve[t] <= fit.curve[t - 1] + 1e-15);
  // c1 consistent with the 4 sqrt(L) (f(w0) - f*) scale within a factor of 10
  ObjectiveOracle oracle(fleet, rule);
  double f0 = oracle.loss(zeros(4));
  double c1_scale = 4.0 * std::sqrt(c.L) * f0;
  CHECK(std::abs(fit.c1) <= 10.0 * c1_scale);
  CHECK(fit.residual < fit.curve.front());
}

TEST_CASE("replicate fits agree across seeds") {
  Fleet fleet = quad_fleet(2, 4, 0.5, 0.05, 70, true, 0.01);
  RngStream crng = derive_stream(1, {12});
  TaskConstants c = measure_constants(fleet, 200, crng);
  int horizon = 4000;
  OptionA rule;
  rule.eta = theorem_stepsize(OptionA{}, c, 1, horizon);
  DelayModel delays = DelayModel::constant(2, 1.0, 5.0);
  RunLog a = simulate_async(fleet, rule, 1, 1.0, delays, {horizon, 0.0}, 101, zeros(4));
  RunLog b = simulate_async(fleet, rule, 1, 1.0, delays, {horizon, 0.0}, 202, zeros(4));
  RateFit fa = fit_rate(a, a.tau_observed, rule, c, 1);
  RateFit fb = fit_rate(b, b.tau_observed, rule, c, 1);
  CHECK(std::abs(fa.c1 - fb.c1) <= 0.25 * std::max(std::abs(fa.c1), std::abs(fb.c1)));
}

TEST_CASE("gradcheck passes on quadratic and logistic fleets") {
  Fleet quad = quad_fleet(3, 5, 1.0, 0.3, 71);
  GradCheckReport rq = gradcheck_suite(quad, 6, 99);
  INFO(rq.to_table());
  CHECK(rq.pass);
  CHECK(rq.entries.size() == 6u * 6u);  // six operations per probe
  for (const auto& e : rq.entries) CHECK(e.rel_err <= 1e-4);

  RngStream rng = derive_stream(72, {static_cast<std::uint64_t>(StreamPurpose::kFleet)});
  FleetOptions opts;
  opts.pool_size = 30;
  Fleet logi = make_fleet(TaskKind::kLogistic, 2, 0.8, 3, rng, opts);
  GradCheckReport rl = gradcheck_suite(logi, 2, 99);
  INFO(rl.to_table());
  CHECK(rl.pass);
}

TEST_CASE("reports serialize to JSON") {
  Fleet fleet = quad_fleet(2, 3, 1.0, 0.1, 73);
  LemmaParams p;
  p.lambda = 10.0 * fleet_global_L(fleet);
  BoundReport r = check_lemma("lemma5_smoothness_me", fleet, p, fast_probe());
  std::string j = r.to_json();
  CHECK(j.find("\"margin\"") != std::string::npos);
  CHECK(j.find("lemma5_smoothness_me") != std::string::npos);
  GradCheckReport g = gradcheck_suite(fleet, 2, 99);
  CHECK(g.to_json().find("\"entries\"") != std::string::npos);
}
