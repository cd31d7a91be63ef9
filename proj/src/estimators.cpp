#include "pafl/estimators.hpp"

#include <cmath>

namespace pafl {

double rule_eta(const UpdateRule& rule) {
  return std::visit([](const auto& r) { return r.eta; }, rule);
}

EstimatorStreams make_estimator_streams(std::uint64_t seed, std::uint64_t client,
                                        std::uint64_t cycle) {
  EstimatorStreams s;
  s.main = derive_stream(seed, {client, cycle, static_cast<std::uint64_t>(StreamPurpose::kBatchMain)});
  s.inner = derive_stream(seed, {client, cycle, static_cast<std::uint64_t>(StreamPurpose::kBatchInner)});
  s.hess = derive_stream(seed, {client, cycle, static_cast<std::uint64_t>(StreamPurpose::kBatchHess)});
  return s;
}

GradEstimate grad_option_a(const ClientTask& task, const Vec& w, const DataBatch& batch) {
  GradEstimate est;
  est.vector = batch_grad(task, w, batch);
  est.batches_consumed = 1;
  return est;
}

Vec maml_full_grad(const ClientTask& task, const Vec& w, double alpha) {
  Vec g = population_grad(task, w);
  Vec shifted = axpy(-alpha, g, w);
  Vec v = population_grad(task, shifted);
  // [I - alpha H(w)] v
  Vec hv = population_hvp(task, w, v);
  Vec out = axpy(-alpha, hv, v);
  require_finite(out, "maml_full_grad");
  return out;
}

GradEstimate maml_stoch_grad(const ClientTask& task, const Vec& w, const OptionB& rule,
                             EstimatorStreams& streams) {
  if (rule.hvp_mode == HvpMode::kFirstOrder && !(rule.hvp_delta > 0.0))
    throw NumericsError("maml_stoch_grad: hvp_delta must be positive");

  DataBatch d_main = sample_batch(task, rule.batch, streams.main);
  DataBatch d_inner = sample_batch(task, rule.batch_inner, streams.inner);
  DataBatch d_hess = sample_batch(task, rule.batch_hess, streams.hess);

  Vec g_inner = batch_grad(task, w, d_inner);
  Vec shifted = axpy(-rule.alpha, g_inner, w);
  Vec g = batch_grad(task, shifted, d_main);

  Vec hv;
  switch (rule.hvp_mode) {
    case HvpMode::kExact:
      hv = batch_hvp(task, w, g, d_hess);
      break;
    case HvpMode::kFirstOrder: {
      double delta = rule.hvp_delta / (1.0 + norm(g));
      Vec gp = batch_grad(task, axpy(delta, g, w), d_hess);
      Vec gm = batch_grad(task, axpy(-delta, g, w), d_hess);
      hv = scaled(1.0 / (2.0 * delta), sub(gp, gm));
      break;
    }
    case HvpMode::kDropped:
      hv = zeros(w.size());
      break;
  }

  GradEstimate est;
  est.vector = axpy(-rule.alpha, hv, g);
  require_finite(est.vector, "maml_stoch_grad");
  est.batches_consumed = 3;
  return est;
}

Vec moreau_inner_minimize(const ClientTask& task, const Vec& w, const DataBatch* batch,
                          double lambda, double stepsize, double nu_target, int max_steps,
                          double* out_residual, int* out_steps) {
  // iterate over the offset theta - w so the residual is not swamped by
  // cancellation at large lambda
  Vec offset = zeros(w.size());
  double residual = 0.0;
  int steps = 0;
  for (;; ++steps) {
    Vec theta = add(w, offset);
    Vec g = batch ? batch_grad(task, theta, *batch) : population_grad(task, theta);
    axpy_into(lambda, offset, g);
    residual = norm(g);
    if (residual <= nu_target) break;
    if (steps >= max_steps) break;
    axpy_into(-stepsize, g, offset);
    if (norm(offset) > 1e8)
      throw NumericsError("moreau inner solve diverged (stepsize too large?)");
  }
  if (out_residual) *out_residual = residual;
  if (out_steps) *out_steps = steps;
  return offset;
}

Vec moreau_prox_exact(const ClientTask& task, const Vec& w, double lambda) {
  if (task.kind == TaskKind::kQuadratic) {
    // stationarity: (H + lambda I) theta = H w* + lambda w
    Eigen::MatrixXd m = task.quad.H;
    m.diagonal().array() += lambda;
    Eigen::VectorXd rhs = task.quad.H * task.quad.w_star + lambda * to_eigen(w);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
      throw NumericsError("moreau_prox_exact: factorization failed (lambda <= -min eig?)");
    return from_eigen(llt.solve(rhs));
  }
  double residual = 0.0;
  int steps = 0;
  Vec offset = moreau_inner_minimize(task, w, nullptr, lambda, 1.0 / lambda, 1e-10, 200000,
                                     &residual, &steps);
  if (residual > 1e-10)
    throw NumericsError("moreau_prox_exact: inner solve budget exceeded");
  return add(w, offset);
}

Vec moreau_grad_exact(const ClientTask& task, const Vec& w, double lambda) {
  Vec prox = moreau_prox_exact(task, w, lambda);
  return scaled(lambda, sub(w, prox));
}

GradEstimate moreau_grad_stoch(const ClientTask& task, const Vec& w, const OptionC& rule,
                               EstimatorStreams& streams) {
  DataBatch batch = sample_batch(task, rule.batch, streams.main);
  double step = rule.inner_stepsize > 0.0 ? rule.inner_stepsize : 1.0 / rule.lambda;
  double nu_target = rule.inner_stop == InnerStop::kFixedSteps ? 0.0 : rule.nu;
  int max_steps = rule.inner_stop == InnerStop::kGradNorm ? 100000 : rule.inner_steps;
  if (rule.inner_stop == InnerStop::kGradNorm && rule.nu <= 0.0)
    throw NumericsError("moreau_grad_stoch: nu must be positive for grad_norm stopping");

  double residual = 0.0;
  int steps = 0;
  Vec offset =
      moreau_inner_minimize(task, w, &batch, rule.lambda, step, nu_target, max_steps, &residual, &steps);
  if (rule.inner_stop == InnerStop::kGradNorm && residual > rule.nu)
    throw NumericsError("moreau_grad_stoch: inner solve budget exceeded");

  GradEstimate est;
  est.vector = scaled(-rule.lambda, offset);  // lambda * (w - theta)
  require_finite(est.vector, "moreau_grad_stoch");
  est.batches_consumed = 1;
  est.inner_steps = steps;
  est.inner_residual = residual;
  return est;
}

GradEstimate personalized_grad(const ClientTask& task, const Vec& w, const UpdateRule& rule,
                               EstimatorStreams& streams) {
  if (const auto* a = std::get_if<OptionA>(&rule)) {
    DataBatch batch = sample_batch(task, a->batch, streams.main);
    return grad_option_a(task, w, batch);
  }
  if (const auto* b = std::get_if<OptionB>(&rule)) return maml_stoch_grad(task, w, *b, streams);
  return moreau_grad_stoch(task, w, std::get<OptionC>(rule), streams);
}

}  // namespace pafl
