#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pafl/estimators.hpp"
#include "pafl/simulator.hpp"
#include "pafl/tasks.hpp"

namespace pafl {

// Probe geometry and sampling budgets for the bound checks.
struct ProbeConfig {
  double radius = 0.0;  // 0 -> 10x the dispersion of client minimizers
  int probes = 1000;    // probe points (or pairs, for Lipschitz checks)
  int mc_draws = 10000; // Monte-Carlo draws for bias/variance checks
  std::uint64_t seed = 1234;
};

struct LemmaParams {
  double alpha = 0.0;  // option B personalization stepsize
  double lambda = 0.0; // option C regularization weight
  double nu = 1e-8;    // option C inner residual target
  int b = 1;           // batch size
};

struct BoundReport {
  std::string name;
  double bound = 0.0;
  double empirical_max = 0.0;
  double empirical_mean = 0.0;
  double margin = 0.0;  // empirical_max / bound (0 when both vanish)
  double tolerance = 0.0;  // bound plus Monte-Carlo allowance, when applicable
  std::string probe_desc;
  bool analytic_constants = false;
  bool pass = false;
  std::string to_json() const;
};

// Names accepted by check_lemma.
inline constexpr const char* kLemmaNames[] = {
    "lemma1_smoothness_maml",  // L_b
    "lemma2_bias_maml",        // mu_b
    "lemma2_variance_maml",    // sigma_b^2
    "lemma3_diversity_maml",   // gamma_b^2
    "lemma4_grad_norm_maml",   // G_b
    "lemma5_smoothness_me",    // L_c
    "lemma6_bias_me",          // mu_c
    "lemma6_variance_me",      // sigma_c^2
    "lemma7_diversity_me",     // gamma_c^2
};

BoundReport check_lemma(const std::string& bound_name, const Fleet& fleet,
                        const LemmaParams& params, const ProbeConfig& probe);

std::vector<BoundReport> check_all_lemmas(const Fleet& fleet, const LemmaParams& params,
                                          const ProbeConfig& probe);

// Fixed-width roll-up of all margins.
std::string bound_table(const std::vector<BoundReport>& reports);

struct RateFit {
  std::vector<double> curve;  // running average (1/t) sum_{s<t} ||grad F(w^s)||^2
  double c1 = 0.0;            // coefficient of 1/sqrt(t)
  double c2 = 0.0;            // coefficient of 1/t (transient term)
  double residual = 0.0;      // RMS fit residual
  double threshold = 0.0;     // theorem horizon requirement that was enforced
  std::string to_json() const;
};

// Theorem horizon requirement for the rule at (q, tau); L/L_b/L_c are derived
// from consts and the rule's hyperparameters.
double theorem_threshold(const UpdateRule& rule, const TaskConstants& consts, int q, int tau);

// Theorem-prescribed local stepsize eta = 1/(Q sqrt(L_x T)).
double theorem_stepsize(const UpdateRule& rule, const TaskConstants& consts, int q, int horizon);

// Least-squares fit of the running-average squared gradient norm to
// c1/sqrt(t) + c2/t.  Throws if the log's horizon is below the theorem
// threshold (the message carries the required value).
RateFit fit_rate(const RunLog& log, int tau, const UpdateRule& rule, const TaskConstants& consts,
                 int q);

struct GradCheckEntry {
  std::string op;
  int client = 0;
  double rel_err = 0.0;
  int worst_coord = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 1e-4;
  bool pass = false;
  std::string to_json() const;
  std::string to_table() const;
};

// Every analytic gradient path against central finite differences at random
// probes; covers plain/batch gradients, the MAML composition (exact HVP), and
// both Moreau-envelope paths.
GradCheckReport gradcheck_suite(const Fleet& fleet, int probes, std::uint64_t seed,
                                double tol = 1e-4);

}  // namespace pafl
