#include "pafl/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pafl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw std::runtime_error("cannot create directory " + path + ": " + ec.message());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) ensure_dir(target.parent_path().string());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "step,time,grad_norm_sq,loss,staleness,active_ratio\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_g17(r.time) << ',' << format_g17(r.grad_norm_sq) << ','
        << format_g17(r.loss) << ',' << r.staleness << ',' << format_g17(r.active_ratio) << '\n';
  }
  return out.str();
}

std::string ledger_csv(const std::vector<StalenessRow>& rows) {
  std::ostringstream out;
  out << "t,client,omega,staleness\n";
  for (const auto& r : rows)
    out << r.t << ',' << r.client << ',' << r.omega << ',' << r.staleness << '\n';
  return out.str();
}

namespace {

json final_metrics(const RunLog& log) {
  json j;
  if (!log.metrics.empty()) {
    const auto& last = log.metrics.back();
    double running = 0.0;
    for (const auto& m : log.metrics) running += m.grad_norm_sq;
    j = {{"final_grad_norm_sq", last.grad_norm_sq},
         {"final_loss", last.loss},
         {"running_avg_grad_norm_sq", running / static_cast<double>(log.metrics.size())},
         {"steps", static_cast<int>(log.metrics.size())}};
  }
  j["diverged"] = log.diverged;
  if (log.diverged) j["divergence_message"] = log.divergence_message;
  return j;
}

}  // namespace

std::string run_summary_json(const ExperimentConfig& cfg, std::uint64_t seed, const RunLog& log) {
  json j;
  j["config"] = json::parse(dump_config(cfg));
  j["seed"] = seed;
  j["tau_observed"] = log.tau_observed;
  j["time_avg_active_ratio"] = log.time_avg_active_ratio;
  j["total_time"] = log.total_time;
  j["arrival_tv_distance"] = arrival_tv_distance(log);
  j["final_metrics"] = final_metrics(log);
  return j.dump(2);
}

std::string aggregate_json(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           const std::vector<const RunLog*>& logs) {
  json j;
  j["config"] = json::parse(dump_config(cfg));
  json per_seed = json::array();
  for (std::size_t i = 0; i < logs.size(); ++i) {
    json row = final_metrics(*logs[i]);
    row["seed"] = seeds[i];
    row["tau_observed"] = logs[i]->tau_observed;
    row["time_avg_active_ratio"] = logs[i]->time_avg_active_ratio;
    per_seed.push_back(row);
  }
  j["runs"] = per_seed;
  return j.dump(2);
}

}  // namespace pafl
