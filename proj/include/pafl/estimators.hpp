#pragma once

#include <variant>

#include "pafl/numerics.hpp"
#include "pafl/rng.hpp"
#include "pafl/tasks.hpp"

namespace pafl {

enum class HvpMode { kExact, kFirstOrder, kDropped };

struct OptionA {
  double eta = 0.03;
  int batch = 1;  // |D|
};

struct OptionB {
  double eta = 0.03;
  double alpha = 0.0;
  HvpMode hvp_mode = HvpMode::kFirstOrder;
  double hvp_delta = 1e-4;  // scaled by 1/(1+||u||) at use
  int batch = 1;            // |D|
  int batch_inner = 1;      // |D'|
  int batch_hess = 1;       // |D''|
};

enum class InnerStop { kGradNorm, kFixedSteps, kBoth };

struct OptionC {
  double eta = 0.03;
  double lambda = 0.0;
  InnerStop inner_stop = InnerStop::kBoth;  // whichever triggers first
  double nu = 1e-6;
  int inner_steps = 10;         // K
  double inner_stepsize = 0.0;  // 0 -> 1/lambda
  int batch = 1;
};

using UpdateRule = std::variant<OptionA, OptionB, OptionC>;

double rule_eta(const UpdateRule& rule);

struct GradEstimate {
  Vec vector;
  int batches_consumed = 0;
  int inner_steps = 0;          // 0 for options A/B
  double inner_residual = 0.0;  // achieved ||grad h|| (effective nu), option C
};

// The per-cycle stream bundle a client uses; one purpose-stream per batch
// role so that Option B with alpha = 0 consumes exactly the same D-sequence
// as Option A.
struct EstimatorStreams {
  RngStream main;   // D
  RngStream inner;  // D'
  RngStream hess;   // D''
};

EstimatorStreams make_estimator_streams(std::uint64_t seed, std::uint64_t client,
                                        std::uint64_t cycle);

GradEstimate grad_option_a(const ClientTask& task, const Vec& w, const DataBatch& batch);

// Exact deterministic personalized gradient [I - a H f(w)] grad f(w - a grad f(w)).
Vec maml_full_grad(const ClientTask& task, const Vec& w, double alpha);

GradEstimate maml_stoch_grad(const ClientTask& task, const Vec& w, const OptionB& rule,
                             EstimatorStreams& streams);

// Exact inner argmin of f(theta) + lambda/2 ||theta - w||^2 (linear solve for
// quadratic, inner descent to 1e-10 for logistic).
Vec moreau_prox_exact(const ClientTask& task, const Vec& w, double lambda);

// lambda * (w - prox(w))
Vec moreau_grad_exact(const ClientTask& task, const Vec& w, double lambda);

GradEstimate moreau_grad_stoch(const ClientTask& task, const Vec& w, const OptionC& rule,
                               EstimatorStreams& streams);

// Inner solver over the offset theta - w, shared by the stochastic and exact
// logistic prox paths.  Returns the offset; residual/steps reported through
// out-params.
Vec moreau_inner_minimize(const ClientTask& task, const Vec& w, const DataBatch* batch,
                          double lambda, double stepsize, double nu_target, int max_steps,
                          double* out_residual, int* out_steps);

// Dispatch on the rule; used by the client state machine.
GradEstimate personalized_grad(const ClientTask& task, const Vec& w, const UpdateRule& rule,
                               EstimatorStreams& streams);

}  // namespace pafl
