#include "pafl/federation.hpp"

#include <cmath>
#include <stdexcept>

namespace pafl {

namespace {

Vec option_step(const ClientTask& task, const Vec& w, const UpdateRule& rule,
                EstimatorStreams& streams, LocalRun& run) {
  GradEstimate est = personalized_grad(task, w, rule, streams);
  run.batches_consumed += est.batches_consumed;
  run.inner_steps += est.inner_steps;
  run.max_inner_residual = std::max(run.max_inner_residual, est.inner_residual);
  return axpy(-rule_eta(rule), est.vector, w);
}

}  // namespace

LocalRun client_local_run(const ClientTask& task, const Vec& w_start, const UpdateRule& rule,
                          int q, EstimatorStreams streams, int download_step) {
  if (q < 1) throw NumericsError("client_local_run: Q must be >= 1");
  LocalRun run;
  run.client_id = task.client_id;
  run.w_start = w_start;
  run.q = q;
  run.download_step = download_step;

  Vec w = w_start;
  for (int step = 0; step < q; ++step) {
    w = option_step(task, w, rule, streams, run);
    if (norm(w) > kDivergenceBound)
      throw DivergenceError("client_local_run: iterate exceeded overflow bound on client " +
                            std::to_string(task.client_id) + " at local step " +
                            std::to_string(step));
  }
  run.delta = sub(w_start, w);
  return run;
}

StalenessRow server_apply(ServerState& state, const Vec& delta, int client_id, int download_step,
                          std::uint64_t snapshot_hash) {
  require_finite(delta, "server_apply: delta");
  axpy_into(-state.beta, delta, state.w);
  require_finite(state.w, "server_apply: w");
  StalenessRow row;
  row.t = state.t;
  row.client = client_id;
  row.omega = download_step;
  row.staleness = state.t - download_step;
  row.snapshot_hash = snapshot_hash;
  state.t += 1;
  return row;
}

ServerState run_fedavg_round(const ServerState& state, const Fleet& fleet,
                             const std::vector<int>& participation, const UpdateRule& rule, int q,
                             std::uint64_t seed, std::uint64_t round) {
  if (participation.empty()) throw NumericsError("run_fedavg_round: empty participation");
  Vec mean_delta = zeros(state.w.size());
  for (int id : participation) {
    const ClientTask& task = fleet.at(static_cast<std::size_t>(id));
    auto streams = make_estimator_streams(seed, static_cast<std::uint64_t>(id), round);
    LocalRun run = client_local_run(task, state.w, rule, q, streams, state.t);
    axpy_into(1.0 / static_cast<double>(participation.size()), run.delta, mean_delta);
  }
  ServerState next = state;
  server_apply(next, mean_delta, participation.front(), state.t);
  return next;
}

}  // namespace pafl
