#include "pafl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace pafl {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int lemma_index(const std::string& name) {
  for (int i = 0; i < static_cast<int>(std::size(kLemmaNames)); ++i)
    if (name == kLemmaNames[i]) return i;
  throw NumericsError("check_lemma: unknown bound name '" + name + "'");
}

// Uniform point in the ball of the given radius around the center.
Vec ball_point(const Vec& center, double radius, RngStream& rng) {
  Vec p(center.size());
  double ns = 0.0;
  for (double& x : p) {
    x = rng.next_normal();
    ns += x * x;
  }
  double r = radius * std::pow(rng.next_double(), 1.0 / static_cast<double>(center.size()));
  double scale = ns > 0.0 ? r / std::sqrt(ns) : 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = center[j] + scale * p[j];
  return p;
}

double default_radius(const Fleet& fleet, const Vec& center) {
  // 10x the rms dispersion of client minimizers around the global minimizer
  if (fleet.front().kind != TaskKind::kQuadratic) return 1.0;
  double acc = 0.0;
  for (const auto& task : fleet) acc += dist(from_eigen(task.quad.w_star), center);
  double mean = acc / static_cast<double>(fleet.size());
  return mean > 0.0 ? 10.0 * mean : 1.0;
}

// Valid gradient-norm bound over every point the MAML map evaluates at, for
// probes inside the ball: base sup over the ball, inflated by the inner step.
double grad_bound_on_ball(const Fleet& fleet, const Vec& center, double radius, double alpha,
                          const TaskConstants& consts) {
  double g0 = 0.0;
  if (fleet.front().kind == TaskKind::kQuadratic) {
    for (const auto& task : fleet) {
      Eigen::VectorXd gc = task.quad.H * (to_eigen(center) - task.quad.w_star);
      g0 = std::max(g0, gc.norm());
    }
    g0 += consts.L * radius;
  } else {
    // logistic single-sample gradients are bounded by the feature norm
    for (const auto& task : fleet)
      g0 = std::max(g0, task.logi.X.rowwise().norm().maxCoeff());
  }
  return g0 * (1.0 + alpha * consts.L);
}

double safe_term(double factor, double maybe_inf) {
  return factor == 0.0 ? 0.0 : factor * maybe_inf;
}

struct Env {
  TaskConstants consts;
  Vec center;
  double radius = 0.0;
  double g_ball = 0.0;  // effective G over the probe ball
};

Env make_env(const Fleet& fleet, const LemmaParams& p, const ProbeConfig& probe) {
  Env env;
  RngStream crng = derive_stream(probe.seed, {static_cast<std::uint64_t>(StreamPurpose::kProbe), 0});
  env.consts = measure_constants(fleet, 2000, crng);
  env.center = global_minimizer(fleet);
  env.radius = probe.radius > 0.0 ? probe.radius : default_radius(fleet, env.center);
  env.g_ball = grad_bound_on_ball(fleet, env.center, env.radius, p.alpha, env.consts);
  return env;
}

std::string describe(const Env& env, const ProbeConfig& probe) {
  std::ostringstream out;
  out << "ball radius " << fmt(env.radius) << " around the global minimizer, " << probe.probes
      << " probes, " << probe.mc_draws << " mc draws, G_ball " << fmt(env.g_ball);
  return out.str();
}

void finalize(BoundReport& r) {
  double denom = r.tolerance > 0.0 ? r.tolerance : r.bound;
  if (denom > 0.0) {
    r.margin = r.empirical_max / denom;
  } else {
    r.margin = r.empirical_max > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  r.pass = r.margin <= 1.0;
}

// Empirical Lipschitz constant of `grad` over probe pairs in the ball.
template <typename GradFn>
void lipschitz_probe(BoundReport& r, const Fleet& fleet, const Env& env, const ProbeConfig& probe,
                     int lemma_id, GradFn&& grad) {
  if (probe.probes < 1) throw NumericsError(r.name + ": insufficient probes");
  RngStream rng =
      derive_stream(probe.seed, {static_cast<std::uint64_t>(lemma_id), 1});
  double acc = 0.0;
  for (int k = 0; k < probe.probes; ++k) {
    Vec w = ball_point(env.center, env.radius, rng);
    Vec u = ball_point(env.center, env.radius, rng);
    double d = dist(w, u);
    if (d < 1e-12) continue;
    double worst = 0.0;
    for (const auto& task : fleet) worst = std::max(worst, dist(grad(task, w), grad(task, u)) / d);
    r.empirical_max = std::max(r.empirical_max, worst);
    acc += worst;
  }
  r.empirical_mean = acc / probe.probes;
}

// Max over probe points of the fleet-average squared deviation of per-client
// personalized gradients from their mean.
template <typename GradFn>
void diversity_probe(BoundReport& r, const Fleet& fleet, const Env& env, const ProbeConfig& probe,
                     int lemma_id, GradFn&& grad) {
  if (probe.probes < 1) throw NumericsError(r.name + ": insufficient probes");
  RngStream rng = derive_stream(probe.seed, {static_cast<std::uint64_t>(lemma_id), 1});
  double acc = 0.0;
  std::size_t d = env.center.size();
  for (int k = 0; k < probe.probes; ++k) {
    Vec w = ball_point(env.center, env.radius, rng);
    std::vector<Vec> grads;
    grads.reserve(fleet.size());
    Vec mean = zeros(d);
    for (const auto& task : fleet) {
      grads.push_back(grad(task, w));
      axpy_into(1.0 / static_cast<double>(fleet.size()), grads.back(), mean);
    }
    double div = 0.0;
    for (const auto& g : grads) div += norm_sq(sub(g, mean)) / static_cast<double>(fleet.size());
    r.empirical_max = std::max(r.empirical_max, div);
    acc += div;
  }
  r.empirical_mean = acc / probe.probes;
}

// Monte-Carlo bias and variance of a stochastic personalized gradient against
// its exact counterpart, at one probe point per client.  The pass criterion
// allows three standard errors on top of the analytic bound.
template <typename DrawFn, typename ExactFn>
void mc_probe(BoundReport& bias_like, bool variance_mode, const Fleet& fleet, const Env& env,
              const ProbeConfig& probe, int lemma_id, DrawFn&& draw, ExactFn&& exact) {
  if (probe.mc_draws < 2) throw NumericsError(bias_like.name + ": insufficient probes");
  RngStream rng = derive_stream(probe.seed, {static_cast<std::uint64_t>(lemma_id), 1});
  double acc = 0.0;
  double worst_se = 0.0;
  int n_checked = 0;
  for (const auto& task : fleet) {
    Vec w = ball_point(env.center, env.radius, rng);
    Vec truth = exact(task, w);
    std::size_t d = w.size();
    Vec mean_diff = zeros(d);
    double sum_sq = 0.0;    // sum of ||diff||^2
    double sum_sq2 = 0.0;   // sum of ||diff||^4
    for (int k = 0; k < probe.mc_draws; ++k) {
      Vec est = draw(task, w, static_cast<std::uint64_t>(k));
      Vec diff = sub(est, truth);
      axpy_into(1.0 / probe.mc_draws, diff, mean_diff);
      double sq = norm_sq(diff);
      sum_sq += sq;
      sum_sq2 += sq * sq;
    }
    double nd = static_cast<double>(probe.mc_draws);
    double mean_sq = sum_sq / nd;
    double value = 0.0;
    double se = 0.0;
    if (variance_mode) {
      value = mean_sq;
      double var_of_sq = std::max(0.0, (sum_sq2 - nd * mean_sq * mean_sq) / (nd - 1.0));
      se = std::sqrt(var_of_sq / nd);
    } else {
      value = norm(mean_diff);
      double spread = std::max(0.0, (sum_sq - nd * norm_sq(mean_diff)) / (nd - 1.0));
      se = std::sqrt(spread / nd);
    }
    if (value > bias_like.empirical_max) {
      bias_like.empirical_max = value;
      worst_se = se;
    }
    acc += value;
    ++n_checked;
  }
  bias_like.empirical_mean = acc / n_checked;
  bias_like.tolerance = bias_like.bound + 3.0 * worst_se;
}

OptionB lemma_rule_b(const LemmaParams& p) {
  OptionB rule;
  rule.alpha = p.alpha;
  rule.hvp_mode = HvpMode::kExact;
  rule.batch = p.b;
  rule.batch_inner = p.b;
  rule.batch_hess = p.b;
  return rule;
}

OptionC lemma_rule_c(const LemmaParams& p) {
  OptionC rule;
  rule.lambda = p.lambda;
  rule.nu = p.nu;
  rule.inner_stop = InnerStop::kGradNorm;
  rule.batch = p.b;
  return rule;
}

}  // namespace

BoundReport check_lemma(const std::string& bound_name, const Fleet& fleet,
                        const LemmaParams& params, const ProbeConfig& probe) {
  if (fleet.empty()) throw NumericsError("check_lemma: empty fleet");
  int id = lemma_index(bound_name);
  Env env = make_env(fleet, params, probe);
  const TaskConstants& c = env.consts;
  double L = c.L;
  double a = params.alpha;
  double lam = params.lambda;
  double b = static_cast<double>(params.b);
  if (params.b < 1) throw NumericsError("check_lemma: batch size must be >= 1");

  BoundReport r;
  r.name = bound_name;
  r.analytic_constants = c.analytic;
  r.probe_desc = describe(env, probe);

  auto draw_b = [&](const ClientTask& task, const Vec& w, std::uint64_t k) {
    auto streams = make_estimator_streams(probe.seed ^ 0xC0FFEEull,
                                          static_cast<std::uint64_t>(task.client_id), k);
    return maml_stoch_grad(task, w, lemma_rule_b(params), streams).vector;
  };
  auto exact_b = [&](const ClientTask& task, const Vec& w) {
    return maml_full_grad(task, w, a);
  };
  auto draw_c = [&](const ClientTask& task, const Vec& w, std::uint64_t k) {
    auto streams = make_estimator_streams(probe.seed ^ 0xC0FFEEull,
                                          static_cast<std::uint64_t>(task.client_id), k);
    return moreau_grad_stoch(task, w, lemma_rule_c(params), streams).vector;
  };
  auto exact_c = [&](const ClientTask& task, const Vec& w) {
    return moreau_grad_exact(task, w, lam);
  };

  switch (id) {
    case 0: {  // L_b
      r.bound = L * (1.0 + a * L) * (1.0 + a * L) + safe_term(a * c.rho, env.g_ball);
      lipschitz_probe(r, fleet, env, probe, id, exact_b);
      break;
    }
    case 1: {  // mu_b
      r.bound = a * L * (1.0 + a * L) * c.sigma_g / std::sqrt(b);
      mc_probe(r, false, fleet, env, probe, id, draw_b, exact_b);
      break;
    }
    case 2: {  // sigma_b^2
      double s1 = 3.0 * (1.0 + a * L) * (1.0 + a * L) * c.sigma_g * c.sigma_g *
                  (1.0 / b + a * a * L * L / b);
      double s2 = safe_term(3.0 * a * a * c.sigma_h * c.sigma_h / b, env.g_ball * env.g_ball);
      double s3 = 3.0 * a * a * c.sigma_g * c.sigma_g * c.sigma_h * c.sigma_h / b *
                  (1.0 / b + a * a * L * L / b);
      r.bound = s1 + s2 + s3;
      mc_probe(r, true, fleet, env, probe, id, draw_b, exact_b);
      break;
    }
    case 3: {  // gamma_b^2
      r.bound = 12.0 * (1.0 + a * L) * (1.0 + a * L) * (1.0 + a * a * L * L) * c.gamma_g *
                    c.gamma_g +
                safe_term(12.0 * a * a * c.gamma_h * c.gamma_h, env.g_ball * env.g_ball);
      diversity_probe(r, fleet, env, probe, id, exact_b);
      break;
    }
    case 4: {  // G_b
      r.bound = (1.0 + a * L) * env.g_ball;
      RngStream rng = derive_stream(probe.seed, {static_cast<std::uint64_t>(id), 1});
      double acc = 0.0;
      for (int k = 0; k < probe.probes; ++k) {
        Vec w = ball_point(env.center, env.radius, rng);
        double worst = 0.0;
        for (const auto& task : fleet) worst = std::max(worst, norm(maml_full_grad(task, w, a)));
        r.empirical_max = std::max(r.empirical_max, worst);
        acc += worst;
      }
      r.empirical_mean = acc / probe.probes;
      break;
    }
    case 5: {  // L_c
      if (!(lam > L))
        throw NumericsError("lemma5 requires lambda > L (kappa > 1); got lambda = " + fmt(lam) +
                            ", L = " + fmt(L));
      r.bound = lam * L / (lam - L);
      lipschitz_probe(r, fleet, env, probe, id, exact_c);
      break;
    }
    case 6: {  // mu_c
      if (!(lam > L)) throw NumericsError("lemma6 requires lambda > L (kappa > 1)");
      r.bound = lam * params.nu / (lam - L);
      mc_probe(r, false, fleet, env, probe, id, draw_c, exact_c);
      break;
    }
    case 7: {  // sigma_c^2
      if (!(lam > L)) throw NumericsError("lemma6 requires lambda > L (kappa > 1)");
      r.bound = 2.0 * lam * lam / ((lam - L) * (lam - L)) *
                (c.sigma_g * c.sigma_g / b + params.nu * params.nu);
      mc_probe(r, true, fleet, env, probe, id, draw_c, exact_c);
      break;
    }
    case 8: {  // gamma_c^2
      if (!(lam >= 7.0 * L))
        throw NumericsError("lemma7 requires lambda >= 7L; got lambda = " + fmt(lam) +
                            ", 7L = " + fmt(7.0 * L));
      r.bound = 16.0 * lam * lam / (lam * lam - 48.0 * L * L) * c.gamma_g * c.gamma_g;
      diversity_probe(r, fleet, env, probe, id, exact_c);
      break;
    }
    default:
      throw NumericsError("check_lemma: unreachable");
  }

  finalize(r);
  return r;
}

std::vector<BoundReport> check_all_lemmas(const Fleet& fleet, const LemmaParams& params,
                                          const ProbeConfig& probe) {
  std::vector<BoundReport> out;
  for (const char* name : kLemmaNames) out.push_back(check_lemma(name, fleet, params, probe));
  return out;
}

std::string bound_table(const std::vector<BoundReport>& reports) {
  std::ostringstream out;
  out << "bound                     analytic      empirical_max     margin  result\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-24s %12.5g %16.5g %10.4f  %s\n", r.name.c_str(), r.bound,
                  r.empirical_max, r.margin, r.pass ? "pass" : "FAIL");
    out << line;
  }
  return out.str();
}

std::string BoundReport::to_json() const {
  json j{{"name", name},
         {"bound", bound},
         {"empirical_max", empirical_max},
         {"empirical_mean", empirical_mean},
         {"margin", margin},
         {"tolerance", tolerance},
         {"probe_desc", probe_desc},
         {"analytic_constants", analytic_constants},
         {"pass", pass}};
  return j.dump(2);
}

double theorem_threshold(const UpdateRule& rule, const TaskConstants& consts, int q, int tau) {
  double L = consts.L;
  double t1 = static_cast<double>(tau) + 1.0;
  if (std::holds_alternative<OptionA>(rule)) return 160.0 * L * (q + 7.0) * t1 * t1 * t1;
  if (const auto* bopt = std::get_if<OptionB>(&rule)) {
    double lb = L * (1.0 + bopt->alpha * L) * (1.0 + bopt->alpha * L);
    if (consts.rho > 0.0 && std::isfinite(consts.G)) lb += bopt->alpha * consts.rho * consts.G;
    return 64.0 * lb;
  }
  const auto& copt = std::get<OptionC>(rule);
  if (!(copt.lambda > L)) throw NumericsError("theorem_threshold: lambda must exceed L");
  double lc = copt.lambda * L / (copt.lambda - L);
  return 288.0 * lc * (q + 7.0) * t1 * t1;
}

double theorem_stepsize(const UpdateRule& rule, const TaskConstants& consts, int q, int horizon) {
  double L = consts.L;
  double lx = L;
  if (const auto* bopt = std::get_if<OptionB>(&rule)) {
    lx = L * (1.0 + bopt->alpha * L) * (1.0 + bopt->alpha * L);
    if (consts.rho > 0.0 && std::isfinite(consts.G)) lx += bopt->alpha * consts.rho * consts.G;
  } else if (const auto* copt = std::get_if<OptionC>(&rule)) {
    if (!(copt->lambda > L)) throw NumericsError("theorem_stepsize: lambda must exceed L");
    lx = copt->lambda * L / (copt->lambda - L);
  }
  return 1.0 / (q * std::sqrt(lx * horizon));
}

RateFit fit_rate(const RunLog& log, int tau, const UpdateRule& rule, const TaskConstants& consts,
                 int q) {
  double threshold = theorem_threshold(rule, consts, q, tau);
  double horizon = static_cast<double>(log.metrics.size());
  if (horizon < threshold)
    throw NumericsError("fit_rate: horizon " + fmt(horizon) +
                        " is below the theorem threshold " + fmt(threshold) +
                        "; refusing to fit");

  RateFit fit;
  fit.threshold = threshold;
  fit.curve.reserve(log.metrics.size());
  double running = 0.0;
  for (std::size_t t = 0; t < log.metrics.size(); ++t) {
    running += log.metrics[t].grad_norm_sq;
    fit.curve.push_back(running / static_cast<double>(t + 1));
  }

  // least squares of curve[t-1] on [1/sqrt(t), 1/t]
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t t = 1; t <= fit.curve.size(); ++t) {
    double x1 = 1.0 / std::sqrt(static_cast<double>(t));
    double x2 = 1.0 / static_cast<double>(t);
    double y = fit.curve[t - 1];
    s11 += x1 * x1;
    s12 += x1 * x2;
    s22 += x2 * x2;
    b1 += x1 * y;
    b2 += x2 * y;
  }
  double det = s11 * s22 - s12 * s12;
  if (std::abs(det) < 1e-300) throw NumericsError("fit_rate: degenerate design");
  fit.c1 = (s22 * b1 - s12 * b2) / det;
  fit.c2 = (s11 * b2 - s12 * b1) / det;

  double rss = 0.0;
  for (std::size_t t = 1; t <= fit.curve.size(); ++t) {
    double pred = fit.c1 / std::sqrt(static_cast<double>(t)) + fit.c2 / static_cast<double>(t);
    double e = fit.curve[t - 1] - pred;
    rss += e * e;
  }
  fit.residual = std::sqrt(rss / fit.curve.size());
  return fit;
}

std::string RateFit::to_json() const {
  json j{{"c1", c1},
         {"c2", c2},
         {"residual", residual},
         {"threshold", threshold},
         {"final_running_avg", curve.empty() ? 0.0 : curve.back()}};
  return j.dump(2);
}

namespace {

void push_check(GradCheckReport& report, const std::string& op, int client, const Vec& analytic,
                const Vec& fd) {
  GradCheckEntry e;
  e.op = op;
  e.client = client;
  double worst = 0.0;
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    double err = std::abs(analytic[j] - fd[j]);
    if (err > worst) {
      worst = err;
      e.worst_coord = static_cast<int>(j);
    }
  }
  double scale = std::max(norm(fd), 1e-12);
  e.rel_err = dist(analytic, fd) / scale;
  e.pass = e.rel_err <= report.tol;
  report.entries.push_back(e);
}

}  // namespace

GradCheckReport gradcheck_suite(const Fleet& fleet, int probes, std::uint64_t seed, double tol) {
  if (fleet.empty()) throw NumericsError("gradcheck_suite: empty fleet");
  GradCheckReport report;
  report.tol = tol;

  Vec center = global_minimizer(fleet);
  double radius = default_radius(fleet, center);
  double L = fleet_global_L(fleet);
  double alpha = 0.5 / L;
  double lambda = 10.0 * L;
  RngStream rng = derive_stream(seed, {static_cast<std::uint64_t>(StreamPurpose::kProbe), 7});

  for (int k = 0; k < probes; ++k) {
    const ClientTask& task = fleet[static_cast<std::size_t>(k) % fleet.size()];
    Vec w = ball_point(center, radius, rng);

    // population gradient (Eq. 2 path)
    push_check(report, "population_grad", task.client_id, population_grad(task, w),
               fd_gradient([&](const Vec& x) { return population_loss(task, x); }, w));

    // frozen-batch gradient
    RngStream bstream = derive_stream(seed, {static_cast<std::uint64_t>(k), 11});
    DataBatch batch = sample_batch(task, 3, bstream);
    push_check(report, "batch_grad", task.client_id, batch_grad(task, w, batch),
               fd_gradient([&](const Vec& x) { return batch_loss(task, x, batch); }, w));

    // MAML composition, deterministic (Eq. 5)
    push_check(report, "maml_full_grad", task.client_id, maml_full_grad(task, w, alpha),
               fd_gradient(
                   [&](const Vec& x) {
                     Vec shifted = axpy(-alpha, population_grad(task, x), x);
                     return population_loss(task, shifted);
                   },
                   w));

    // MAML composition on frozen batches with the exact HVP (Eq. 10)
    {
      OptionB rule;
      rule.alpha = alpha;
      rule.hvp_mode = HvpMode::kExact;
      rule.batch = 3;
      rule.batch_inner = 3;
      rule.batch_hess = 3;
      auto frozen = make_estimator_streams(seed, static_cast<std::uint64_t>(task.client_id),
                                           static_cast<std::uint64_t>(k));
      DataBatch d_main = sample_batch(task, 3, frozen.main);
      DataBatch d_inner = sample_batch(task, 3, frozen.inner);
      // compose Eq. 10 from the frozen batches with the Hessian taken on D',
      // so the FD of the frozen composed objective is its exact derivative;
      // the estimator's D''-stream plumbing is covered by the quadratic case
      // (batch Hessians there are sample independent) and the reduction tests
      Vec g_inner = batch_grad(task, w, d_inner);
      Vec g_outer = batch_grad(task, axpy(-alpha, g_inner, w), d_main);
      Vec analytic = axpy(-alpha, batch_hvp(task, w, g_outer, d_inner), g_outer);
      if (task.kind == TaskKind::kQuadratic) {
        auto streams = make_estimator_streams(seed, static_cast<std::uint64_t>(task.client_id),
                                              static_cast<std::uint64_t>(k));
        analytic = maml_stoch_grad(task, w, rule, streams).vector;
      }
      push_check(report, "maml_stoch_grad_exact_hvp", task.client_id, analytic,
                 fd_gradient(
                     [&](const Vec& x) {
                       Vec shifted = axpy(-alpha, batch_grad(task, x, d_inner), x);
                       return batch_loss(task, shifted, d_main);
                     },
                     w));
    }

    // Moreau envelope gradient, exact prox (Eq. 7)
    push_check(report, "moreau_grad_exact", task.client_id, moreau_grad_exact(task, w, lambda),
               fd_gradient(
                   [&](const Vec& x) {
                     Vec prox = moreau_prox_exact(task, x, lambda);
                     return population_loss(task, prox) + 0.5 * lambda * norm_sq(sub(prox, x));
                   },
                   w));

    // Moreau envelope gradient, stochastic inner solve at nu = 1e-10 (Eq. 11)
    {
      OptionC rule;
      rule.lambda = lambda;
      rule.nu = 1e-10;
      rule.inner_stop = InnerStop::kGradNorm;
      rule.batch = 3;
      auto streams = make_estimator_streams(seed, static_cast<std::uint64_t>(task.client_id),
                                            static_cast<std::uint64_t>(k) + 1000);
      Vec analytic = moreau_grad_stoch(task, w, rule, streams).vector;
      auto frozen = make_estimator_streams(seed, static_cast<std::uint64_t>(task.client_id),
                                           static_cast<std::uint64_t>(k) + 1000);
      DataBatch batch_c = sample_batch(task, 3, frozen.main);
      push_check(report, "moreau_grad_stoch", task.client_id, analytic,
                 fd_gradient(
                     [&](const Vec& x) {
                       double res = 0.0;
                       int steps = 0;
                       Vec offset = moreau_inner_minimize(task, x, &batch_c, lambda, 1.0 / lambda,
                                                          1e-12, 200000, &res, &steps);
                       Vec theta = add(x, offset);
                       return batch_loss(task, theta, batch_c) +
                              0.5 * lambda * norm_sq(sub(theta, x));
                     },
                     w));
    }
  }

  report.pass = std::all_of(report.entries.begin(), report.entries.end(),
                            [](const GradCheckEntry& e) { return e.pass; });
  return report;
}

std::string GradCheckReport::to_json() const {
  json arr = json::array();
  for (const auto& e : entries)
    arr.push_back({{"op", e.op},
                   {"client", e.client},
                   {"rel_err", e.rel_err},
                   {"worst_coord", e.worst_coord},
                   {"pass", e.pass}});
  json j{{"tol", tol}, {"pass", pass}, {"entries", arr}};
  return j.dump(2);
}

std::string GradCheckReport::to_table() const {
  // per-op worst case
  std::ostringstream out;
  out << "operation                       checks   worst_rel_err  result\n";
  std::vector<std::string> ops;
  for (const auto& e : entries)
    if (std::find(ops.begin(), ops.end(), e.op) == ops.end()) ops.push_back(e.op);
  char line[256];
  for (const auto& op : ops) {
    double worst = 0.0;
    int count = 0;
    bool ok = true;
    int client = 0, coord = 0;
    for (const auto& e : entries) {
      if (e.op != op) continue;
      ++count;
      if (e.rel_err > worst) {
        worst = e.rel_err;
        client = e.client;
        coord = e.worst_coord;
      }
      ok = ok && e.pass;
    }
    std::snprintf(line, sizeof(line), "%-30s %7d %15.3e  %s (client %d, coord %d)\n", op.c_str(),
                  count, worst, ok ? "pass" : "FAIL", client, coord);
    out << line;
  }
  return out.str();
}

}  // namespace pafl
