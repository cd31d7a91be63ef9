#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pafl/federation.hpp"

namespace pafl {

enum class DistKind { kConstant, kUniform, kExponential };

struct DelayDist {
  DistKind kind = DistKind::kConstant;
  double a = 1.0;  // constant value, uniform lo, or exponential mean
  double b = 1.0;  // uniform hi
};

double sample_delay(const DelayDist& d, RngStream& rng);

struct ClientDelays {
  DelayDist download;
  DelayDist upload;
};

struct DelayModel {
  std::vector<ClientDelays> per_client;

  // Upload/download mean ratio 5, uniform supports, clients linearly
  // staggered by +-spread around unit scale.
  static DelayModel paper_style(int n, double spread = 0.0, double scale = 1.0);
  static DelayModel constant(int n, double download, double upload);
};

struct MetricRow {
  int step = 0;
  double time = 0.0;
  double grad_norm_sq = 0.0;
  double loss = 0.0;
  int staleness = 0;
  double active_ratio = 0.0;
};

struct ConcurrencyPoint {
  double time = 0.0;
  int active = 0;
};

struct Horizon {
  int server_steps = 0;   // > 0: stop after T applied updates
  double sim_time = 0.0;  // > 0: stop at simulated time
};

struct RunLog {
  std::vector<MetricRow> metrics;
  std::vector<StalenessRow> ledger;
  std::vector<ConcurrencyPoint> trace;
  std::vector<std::uint64_t> w_history_hash;  // hash of w^0 .. w^T
  std::vector<int> arrival_counts;            // per client
  Vec final_w;
  int n = 0;
  bool async = true;
  int tau_observed = 0;
  double time_avg_active_ratio = 0.0;
  double total_time = 0.0;
  bool diverged = false;
  std::string divergence_message;
};

// Exact personalized global objective for metric logging: vanilla, MAML, or
// Moreau-envelope gradient/loss depending on the rule.
class ObjectiveOracle {
 public:
  ObjectiveOracle(const Fleet& fleet, const UpdateRule& rule);
  double grad_norm_sq(const Vec& w) const;
  double loss(const Vec& w) const;
  Vec grad(const Vec& w) const;

 private:
  const Fleet& fleet_;
  UpdateRule rule_;
};

// Mean per-client loss after the rule's own adaptation map: the shared model
// itself (vanilla), one inner gradient step (MAML), or the prox model
// (Moreau envelope).
double personalization_metric(const Fleet& fleet, const Vec& w, const UpdateRule& rule);

RunLog simulate_async(const Fleet& fleet, const UpdateRule& rule, int q, double beta,
                      const DelayModel& delays, const Horizon& horizon, std::uint64_t seed,
                      const Vec& w0);

RunLog simulate_sync(const Fleet& fleet, const UpdateRule& rule, int q, double beta,
                     const DelayModel& delays, double participation_ratio, int rounds,
                     std::uint64_t seed, const Vec& w0);

// Total-variation distance of the arrival histogram from uniform.
double arrival_tv_distance(const RunLog& log);

struct ConcurrencySummary {
  std::vector<std::string> modes;
  std::vector<double> ratios;
  std::string to_csv() const;  // mode,time_avg_active_ratio
};

ConcurrencySummary concurrency_report(const std::vector<const RunLog*>& runs);

}  // namespace pafl
