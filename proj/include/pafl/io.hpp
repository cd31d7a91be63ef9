#pragma once

#include <cstdint>
#include <string>

#include "pafl/config.hpp"
#include "pafl/simulator.hpp"

namespace pafl {

// temp + rename so interrupted runs never leave truncated files
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
void ensure_dir(const std::string& path);

// step,time,grad_norm_sq,loss,staleness,active_ratio; %.17g, '.' decimal
std::string metrics_csv(const std::vector<MetricRow>& rows);
// t,client,omega,staleness
std::string ledger_csv(const std::vector<StalenessRow>& rows);

// config echo + tau_observed + concurrency + final metrics for one seed
std::string run_summary_json(const ExperimentConfig& cfg, std::uint64_t seed, const RunLog& log);

// cross-seed roll-up
std::string aggregate_json(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           const std::vector<const RunLog*>& logs);

std::string format_g17(double v);

}  // namespace pafl
