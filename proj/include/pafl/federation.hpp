#pragma once

#include <cstdint>
#include <vector>

#include "pafl/estimators.hpp"
#include "pafl/numerics.hpp"
#include "pafl/tasks.hpp"

namespace pafl {

struct DivergenceError : NumericsError {
  using NumericsError::NumericsError;
};

inline constexpr double kDivergenceBound = 1e8;

struct ServerState {
  Vec w;
  int t = 0;          // server-step counter
  double beta = 1.0;  // server stepsize
};

struct StalenessRow {
  int t = 0;       // server step the update was applied at
  int client = 0;  // i_t
  int omega = 0;   // download step
  int staleness = 0;
  std::uint64_t snapshot_hash = 0;  // hash of the w the client started from
};

struct LocalRun {
  int client_id = 0;
  Vec w_start;
  int q = 1;
  Vec delta;  // w_start - w_final
  int download_step = 0;
  int batches_consumed = 0;
  int inner_steps = 0;
  double max_inner_residual = 0.0;  // effective nu across the Q steps
};

// Q local steps from w_start per the rule's option; pure given the streams.
LocalRun client_local_run(const ClientTask& task, const Vec& w_start, const UpdateRule& rule,
                          int q, EstimatorStreams streams, int download_step = 0);

// w <- w - beta * delta; t <- t + 1.  Returns the ledger row for the applied
// update.
StalenessRow server_apply(ServerState& state, const Vec& delta, int client_id, int download_step,
                          std::uint64_t snapshot_hash = 0);

// One synchronous round: every participant starts from the same w, the mean
// delta is applied once.
ServerState run_fedavg_round(const ServerState& state, const Fleet& fleet,
                             const std::vector<int>& participation, const UpdateRule& rule, int q,
                             std::uint64_t seed, std::uint64_t round);

}  // namespace pafl
