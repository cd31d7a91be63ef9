#include "pafl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

namespace pafl {

double sample_delay(const DelayDist& d, RngStream& rng) {
  double v = 0.0;
  switch (d.kind) {
    case DistKind::kConstant:
      v = d.a;
      break;
    case DistKind::kUniform:
      v = rng.next_uniform(d.a, d.b);
      break;
    case DistKind::kExponential:
      v = rng.next_exponential(d.a);
      break;
  }
  if (v < 0.0) throw NumericsError("sample_delay: negative delay");
  return v;
}

DelayModel DelayModel::paper_style(int n, double spread, double scale) {
  DelayModel m;
  m.per_client.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double ramp = n == 1 ? 0.0 : 2.0 * static_cast<double>(i) / (n - 1) - 1.0;
    double s = scale * (1.0 + spread * ramp);
    m.per_client[static_cast<std::size_t>(i)].download = {DistKind::kUniform, 0.5 * s, 1.5 * s};
    m.per_client[static_cast<std::size_t>(i)].upload = {DistKind::kUniform, 2.5 * s, 7.5 * s};
  }
  return m;
}

DelayModel DelayModel::constant(int n, double download, double upload) {
  DelayModel m;
  m.per_client.resize(static_cast<std::size_t>(n));
  for (auto& c : m.per_client) {
    c.download = {DistKind::kConstant, download, download};
    c.upload = {DistKind::kConstant, upload, upload};
  }
  return m;
}

ObjectiveOracle::ObjectiveOracle(const Fleet& fleet, const UpdateRule& rule)
    : fleet_(fleet), rule_(rule) {}

Vec ObjectiveOracle::grad(const Vec& w) const {
  Vec g = zeros(w.size());
  double inv = 1.0 / static_cast<double>(fleet_.size());
  for (const auto& task : fleet_) {
    if (std::holds_alternative<OptionA>(rule_)) {
      axpy_into(inv, population_grad(task, w), g);
    } else if (const auto* b = std::get_if<OptionB>(&rule_)) {
      axpy_into(inv, maml_full_grad(task, w, b->alpha), g);
    } else {
      const auto& c = std::get<OptionC>(rule_);
      axpy_into(inv, moreau_grad_exact(task, w, c.lambda), g);
    }
  }
  return g;
}

double ObjectiveOracle::grad_norm_sq(const Vec& w) const { return norm_sq(grad(w)); }

double ObjectiveOracle::loss(const Vec& w) const {
  double s = 0.0;
  for (const auto& task : fleet_) {
    if (std::holds_alternative<OptionA>(rule_)) {
      s += population_loss(task, w);
    } else if (const auto* b = std::get_if<OptionB>(&rule_)) {
      Vec shifted = axpy(-b->alpha, population_grad(task, w), w);
      s += population_loss(task, shifted);
    } else {
      const auto& c = std::get<OptionC>(rule_);
      Vec prox = moreau_prox_exact(task, w, c.lambda);
      s += population_loss(task, prox) + 0.5 * c.lambda * norm_sq(sub(prox, w));
    }
  }
  return s / static_cast<double>(fleet_.size());
}

double personalization_metric(const Fleet& fleet, const Vec& w, const UpdateRule& rule) {
  double s = 0.0;
  for (const auto& task : fleet) {
    if (std::holds_alternative<OptionA>(rule)) {
      s += population_loss(task, w);
    } else if (const auto* b = std::get_if<OptionB>(&rule)) {
      s += population_loss(task, axpy(-b->alpha, population_grad(task, w), w));
    } else {
      s += population_loss(task, moreau_prox_exact(task, w, std::get<OptionC>(rule).lambda));
    }
  }
  return s / static_cast<double>(fleet.size());
}

namespace {

struct SimEvent {
  double time = 0.0;
  int rank = 0;  // 0: upload-arrive, 1: download-complete (uploads first on ties)
  int client = 0;
};

struct EventLater {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.rank != b.rank) return a.rank > b.rank;
    return a.client > b.client;
  }
};

struct ActiveTracker {
  int n = 0;
  int active = 0;
  double last_time = 0.0;
  double busy_integral = 0.0;
  std::vector<ConcurrencyPoint> trace;

  void advance(double now) {
    busy_integral += active * (now - last_time);
    last_time = now;
  }
  void set_active(double now, int delta) {
    advance(now);
    active += delta;
    trace.push_back({now, active});
  }
  double ratio() const {
    return last_time > 0.0 ? busy_integral / (n * last_time) : 0.0;
  }
};

}  // namespace

RunLog simulate_async(const Fleet& fleet, const UpdateRule& rule, int q, double beta,
                      const DelayModel& delays, const Horizon& horizon, std::uint64_t seed,
                      const Vec& w0) {
  int n = static_cast<int>(fleet.size());
  if (static_cast<int>(delays.per_client.size()) != n)
    throw NumericsError("simulate_async: delay model size mismatch");
  if (horizon.server_steps <= 0 && horizon.sim_time <= 0.0)
    throw NumericsError("simulate_async: horizon must be positive");

  ObjectiveOracle oracle(fleet, rule);
  ServerState server{w0, 0, beta};

  RunLog log;
  log.n = n;
  log.async = true;
  log.arrival_counts.assign(static_cast<std::size_t>(n), 0);
  log.w_history_hash.push_back(hash_vec(server.w));

  std::vector<std::uint64_t> cycle(static_cast<std::size_t>(n), 0);
  std::vector<LocalRun> pending(static_cast<std::size_t>(n));
  std::vector<std::uint64_t> pending_hash(static_cast<std::size_t>(n), 0);

  std::priority_queue<SimEvent, std::vector<SimEvent>, EventLater> queue;
  ActiveTracker tracker;
  tracker.n = n;

  auto schedule_download = [&](int client, double now) {
    auto c = static_cast<std::size_t>(client);
    auto dstream = derive_stream(
        seed, {static_cast<std::uint64_t>(client), cycle[c],
               static_cast<std::uint64_t>(StreamPurpose::kDelay)});
    double dl = sample_delay(delays.per_client[c].download, dstream);
    queue.push({now + dl, 1, client});
  };

  for (int i = 0; i < n; ++i) schedule_download(i, 0.0);

  while (!queue.empty()) {
    SimEvent ev = queue.top();
    queue.pop();
    if (horizon.sim_time > 0.0 && ev.time > horizon.sim_time) break;
    auto c = static_cast<std::size_t>(ev.client);

    if (ev.rank == 1) {
      // download complete: snapshot the server model, run locally, schedule
      // the upload arrival (compute time is negligible)
      auto streams = make_estimator_streams(seed, static_cast<std::uint64_t>(ev.client), cycle[c]);
      try {
        pending[c] = client_local_run(fleet[c], server.w, rule, q, streams, server.t);
      } catch (const NumericsError& e) {
        log.diverged = true;
        log.divergence_message = e.what();
        break;
      }
      pending_hash[c] = hash_vec(server.w);
      auto dstream = derive_stream(
          seed, {static_cast<std::uint64_t>(ev.client), cycle[c],
                 static_cast<std::uint64_t>(StreamPurpose::kDelay)});
      sample_delay(delays.per_client[c].download, dstream);  // consumed at schedule time
      double ul = sample_delay(delays.per_client[c].upload, dstream);
      tracker.set_active(ev.time, +1);
      queue.push({ev.time + ul, 0, ev.client});
    } else {
      // upload arrival: apply at the server, log metrics for step t
      tracker.set_active(ev.time, -1);
      MetricRow row;
      row.step = server.t;
      row.time = ev.time;
      row.grad_norm_sq = oracle.grad_norm_sq(server.w);
      row.loss = oracle.loss(server.w);
      row.staleness = server.t - pending[c].download_step;
      row.active_ratio = static_cast<double>(tracker.active) / n;
      log.metrics.push_back(row);

      StalenessRow ledger_row;
      try {
        ledger_row = server_apply(server, pending[c].delta, ev.client,
                                  pending[c].download_step, pending_hash[c]);
      } catch (const NumericsError& e) {
        log.diverged = true;
        log.divergence_message = e.what();
        break;
      }
      log.ledger.push_back(ledger_row);
      log.arrival_counts[c] += 1;
      log.tau_observed = std::max(log.tau_observed, ledger_row.staleness);
      log.w_history_hash.push_back(hash_vec(server.w));
      log.total_time = ev.time;

      if (horizon.server_steps > 0 && server.t >= horizon.server_steps) break;
      cycle[c] += 1;
      schedule_download(ev.client, ev.time);
    }
  }

  double final_time = std::max(log.total_time, tracker.last_time);
  tracker.advance(final_time);
  log.trace = std::move(tracker.trace);
  log.time_avg_active_ratio =
      final_time > 0.0 ? tracker.busy_integral / (n * final_time) : 0.0;
  log.final_w = server.w;
  return log;
}

RunLog simulate_sync(const Fleet& fleet, const UpdateRule& rule, int q, double beta,
                     const DelayModel& delays, double participation_ratio, int rounds,
                     std::uint64_t seed, const Vec& w0) {
  int n = static_cast<int>(fleet.size());
  int k = static_cast<int>(std::ceil(participation_ratio * n));
  if (k < 1) throw NumericsError("simulate_sync: participation too small");
  if (static_cast<int>(delays.per_client.size()) != n)
    throw NumericsError("simulate_sync: delay model size mismatch");

  ObjectiveOracle oracle(fleet, rule);
  ServerState server{w0, 0, beta};

  RunLog log;
  log.n = n;
  log.async = false;
  log.arrival_counts.assign(static_cast<std::size_t>(n), 0);
  log.w_history_hash.push_back(hash_vec(server.w));

  double now = 0.0;
  double busy_integral = 0.0;
  std::vector<std::pair<double, int>> edges;  // (time, +-1)

  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);

  for (int round = 0; round < rounds; ++round) {
    auto pstream = derive_stream(seed, {static_cast<std::uint64_t>(round),
                                        static_cast<std::uint64_t>(StreamPurpose::kParticipation)});
    std::vector<int> pool = ids;
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      auto pick = static_cast<std::size_t>(pstream.next_below(pool.size()));
      chosen.push_back(pool[pick]);
      pool[pick] = pool.back();
      pool.pop_back();
    }
    std::sort(chosen.begin(), chosen.end());

    double duration = 0.0;
    Vec mean_delta = zeros(w0.size());
    std::uint64_t snapshot = hash_vec(server.w);
    int max_staleness = 0;
    try {
      for (int id : chosen) {
        auto c = static_cast<std::size_t>(id);
        auto dstream = derive_stream(
            seed, {static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(round),
                   static_cast<std::uint64_t>(StreamPurpose::kDelay)});
        double dl = sample_delay(delays.per_client[c].download, dstream);
        double ul = sample_delay(delays.per_client[c].upload, dstream);
        duration = std::max(duration, dl + ul);
        edges.emplace_back(now + dl, +1);
        edges.emplace_back(now + dl + ul, -1);
        busy_integral += ul;

        auto streams = make_estimator_streams(seed, static_cast<std::uint64_t>(id),
                                              static_cast<std::uint64_t>(round));
        LocalRun run = client_local_run(fleet[c], server.w, rule, q, streams, server.t);
        axpy_into(1.0 / k, run.delta, mean_delta);
        log.arrival_counts[c] += 1;
      }
    } catch (const NumericsError& e) {
      log.diverged = true;
      log.divergence_message = e.what();
      break;
    }

    double round_end = now + duration;
    MetricRow row;
    row.step = server.t;
    row.time = round_end;
    row.grad_norm_sq = oracle.grad_norm_sq(server.w);
    row.loss = oracle.loss(server.w);
    row.staleness = 0;
    log.metrics.push_back(row);

    StalenessRow lrow;
    try {
      lrow = server_apply(server, mean_delta, chosen.front(), server.t, snapshot);
    } catch (const NumericsError& e) {
      log.diverged = true;
      log.divergence_message = e.what();
      break;
    }
    for (int id : chosen) {
      StalenessRow r = lrow;
      r.client = id;
      log.ledger.push_back(r);
    }
    (void)max_staleness;
    log.w_history_hash.push_back(hash_vec(server.w));
    now = round_end;
    log.total_time = now;
  }

  std::sort(edges.begin(), edges.end());
  int active = 0;
  for (const auto& [t, d] : edges) {
    active += d;
    log.trace.push_back({t, active});
  }
  log.time_avg_active_ratio = log.total_time > 0.0 ? busy_integral / (n * log.total_time) : 0.0;
  log.final_w = server.w;
  return log;
}

double arrival_tv_distance(const RunLog& log) {
  double total = 0.0;
  for (int c : log.arrival_counts) total += c;
  if (total == 0.0) return 0.0;
  double tv = 0.0;
  double uniform = 1.0 / static_cast<double>(log.arrival_counts.size());
  for (int c : log.arrival_counts) tv += std::abs(c / total - uniform);
  return 0.5 * tv;
}

std::string ConcurrencySummary::to_csv() const {
  std::ostringstream out;
  out << "mode,time_avg_active_ratio\n";
  for (std::size_t i = 0; i < modes.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ratios[i]);
    out << modes[i] << "," << buf << "\n";
  }
  return out.str();
}

ConcurrencySummary concurrency_report(const std::vector<const RunLog*>& runs) {
  if (runs.empty()) throw NumericsError("concurrency_report: no traces");
  ConcurrencySummary s;
  for (const RunLog* r : runs) {
    s.modes.push_back(r->async ? "async" : "sync");
    s.ratios.push_back(r->time_avg_active_ratio);
  }
  return s;
}

}  // namespace pafl
