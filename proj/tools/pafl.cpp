// pafl: asynchronous personalized federated-learning simulator and
// verification CLI.  Subcommands: run, verify {gradcheck|lemmas|rates},
// compare, report.
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pafl/config.hpp"
#include "pafl/io.hpp"
#include "pafl/verify.hpp"

namespace {

using namespace pafl;
using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::string out_override;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  std::vector<std::uint64_t> seed_override;
};

ExperimentConfig load(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config_file(opts.config_path);
  if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
  if (!opts.seed_override.empty()) cfg.seeds = opts.seed_override;
  return cfg;
}

RunLog run_one(const ExperimentConfig& cfg, const Fleet& fleet, const UpdateRule& rule,
               std::uint64_t seed) {
  DelayModel delays = build_delays(cfg.schedule, cfg.fleet.n);
  Vec w0 = zeros(static_cast<std::size_t>(cfg.fleet.dim));
  if (cfg.schedule.async)
    return simulate_async(fleet, rule, cfg.q, cfg.beta, delays, cfg.horizon, seed, w0);
  int rounds = cfg.horizon.server_steps;
  return simulate_sync(fleet, rule, cfg.q, cfg.beta, delays, cfg.schedule.participation, rounds,
                       seed, w0);
}

// Seeds are independent jobs; run up to `jobs` of them concurrently.
std::vector<RunLog> run_all_seeds(const ExperimentConfig& cfg, const Fleet& fleet,
                                  const UpdateRule& rule, int jobs) {
  std::vector<RunLog> logs(cfg.seeds.size());
  std::vector<std::string> errors(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  int workers = std::clamp(jobs, 1, static_cast<int>(cfg.seeds.size()));
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < cfg.seeds.size(); i = next.fetch_add(1)) {
      try {
        logs[i] = run_one(cfg, fleet, rule, cfg.seeds[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("seed " + std::to_string(cfg.seeds[i]) + ": " + errors[i]);
  return logs;
}

int cmd_run(const CommonOpts& opts) {
  ExperimentConfig cfg = load(opts);
  Fleet fleet = build_fleet(cfg.fleet);
  UpdateRule rule = resolved_rule(cfg, fleet);
  std::vector<RunLog> logs = run_all_seeds(cfg, fleet, rule, opts.jobs);

  std::filesystem::path base = std::filesystem::path(cfg.out_dir) / cfg.name;
  ensure_dir(base.string());
  write_file_atomic((base / "config.json").string(), dump_config(cfg) + "\n");
  std::vector<const RunLog*> views;
  bool diverged = false;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    auto dir = base / ("seed_" + std::to_string(cfg.seeds[i]));
    write_file_atomic((dir / "metrics.csv").string(), metrics_csv(logs[i].metrics));
    write_file_atomic((dir / "ledger.csv").string(), ledger_csv(logs[i].ledger));
    write_file_atomic((dir / "summary.json").string(),
                      run_summary_json(cfg, cfg.seeds[i], logs[i]) + "\n");
    views.push_back(&logs[i]);
    diverged = diverged || logs[i].diverged;
    if (logs[i].diverged)
      std::cerr << "seed " << cfg.seeds[i] << " diverged: " << logs[i].divergence_message
                << " (partial logs kept)\n";
  }
  write_file_atomic((base / "aggregate.json").string(),
                    aggregate_json(cfg, cfg.seeds, views) + "\n");
  write_file_atomic((base / "concurrency.csv").string(), concurrency_report(views).to_csv());
  std::cout << "wrote " << logs.size() << " runs to " << base.string() << "\n";
  return diverged ? 1 : 0;
}

int cmd_verify_gradcheck(const CommonOpts& opts) {
  ExperimentConfig cfg = load(opts);
  Fleet fleet = build_fleet(cfg.fleet);
  GradCheckReport report = gradcheck_suite(fleet, 100, cfg.seeds.front());
  std::cout << report.to_table();
  if (!opts.out_override.empty())
    write_file_atomic(opts.out_override, report.to_json() + "\n");
  return report.pass ? 0 : 1;
}

int cmd_verify_lemmas(const CommonOpts& opts) {
  ExperimentConfig cfg = load(opts);
  Fleet fleet = build_fleet(cfg.fleet);
  double L = fleet_global_L(fleet);

  LemmaParams params;
  if (const auto* b = std::get_if<OptionB>(&cfg.rule)) {
    params.alpha = b->alpha;
    params.b = b->batch;
    params.lambda = 10.0 * L;
  } else if (const auto* c = std::get_if<OptionC>(&cfg.rule)) {
    params.lambda = c->lambda;
    params.nu = c->nu;
    params.b = c->batch;
    params.alpha = 0.5 / L;
  } else {
    params.alpha = 0.5 / L;
    params.lambda = 10.0 * L;
    params.b = std::get<OptionA>(cfg.rule).batch;
  }

  ProbeConfig probe;
  probe.seed = cfg.seeds.front();
  probe.probes = 300;
  probe.mc_draws = 5000;

  std::vector<BoundReport> reports = check_all_lemmas(fleet, params, probe);
  std::cout << bound_table(reports);
  if (!opts.out_override.empty()) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(json::parse(r.to_json()));
    write_file_atomic(opts.out_override, arr.dump(2) + "\n");
  }
  bool all_pass = std::all_of(reports.begin(), reports.end(),
                              [](const BoundReport& r) { return r.pass; });
  return all_pass ? 0 : 1;
}

int cmd_verify_rates(const CommonOpts& opts) {
  ExperimentConfig cfg = load(opts);
  cfg.use_theorem_stepsize = true;
  Fleet fleet = build_fleet(cfg.fleet);
  UpdateRule rule = resolved_rule(cfg, fleet);
  RngStream crng = derive_stream(1, {0});
  TaskConstants consts = measure_constants(fleet, 500, crng);

  std::vector<RunLog> logs = run_all_seeds(cfg, fleet, rule, opts.jobs);
  json out = json::array();
  for (std::size_t i = 0; i < logs.size(); ++i) {
    RateFit fit = fit_rate(logs[i], logs[i].tau_observed, rule, consts, cfg.q);
    json row = json::parse(fit.to_json());
    row["seed"] = cfg.seeds[i];
    row["tau_observed"] = logs[i].tau_observed;
    out.push_back(row);
    std::cout << "seed " << cfg.seeds[i] << ": c1=" << fit.c1 << " c2=" << fit.c2
              << " residual=" << fit.residual << " (threshold " << fit.threshold << ")\n";
  }
  if (!opts.out_override.empty()) write_file_atomic(opts.out_override, out.dump(2) + "\n");
  return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const CommonOpts& opts) {
  if (config_paths.size() < 2)
    throw ConfigError("compare needs at least two --config paths");
  std::vector<ExperimentConfig> cfgs;
  for (const auto& p : config_paths) {
    ExperimentConfig c = load_config_file(p);
    if (!opts.seed_override.empty()) c.seeds = opts.seed_override;
    cfgs.push_back(std::move(c));
  }
  // all configs must share the fleet and the seed list
  std::string fleet_ref = dump_config(cfgs.front());
  for (const auto& c : cfgs) {
    json a = json::parse(dump_config(cfgs.front()))["fleet"];
    json b = json::parse(dump_config(c))["fleet"];
    if (a != b) throw ConfigError("compare: configs use different fleets");
    if (c.seeds != cfgs.front().seeds) throw ConfigError("compare: configs use different seeds");
  }

  Fleet fleet = build_fleet(cfgs.front().fleet);
  std::ostringstream csv;
  csv << "method,seed,time,loss,grad_norm_sq\n";
  double earliest_finish = std::numeric_limits<double>::infinity();
  std::vector<std::vector<RunLog>> all_logs;
  for (const auto& c : cfgs) {
    UpdateRule rule = resolved_rule(c, fleet);
    all_logs.push_back(run_all_seeds(c, fleet, rule, opts.jobs));
    for (const auto& log : all_logs.back())
      earliest_finish = std::min(earliest_finish, log.total_time);
  }
  json summary = json::array();
  for (std::size_t ci = 0; ci < cfgs.size(); ++ci) {
    const auto& c = cfgs[ci];
    UpdateRule rule = resolved_rule(c, fleet);
    double pers_acc = 0.0;
    for (std::size_t si = 0; si < c.seeds.size(); ++si) {
      const RunLog& log = all_logs[ci][si];
      for (const auto& m : log.metrics) {
        if (m.time > earliest_finish) break;  // stop at the earliest finisher
        csv << c.name << ',' << c.seeds[si] << ',' << format_g17(m.time) << ','
            << format_g17(m.loss) << ',' << format_g17(m.grad_norm_sq) << '\n';
      }
      pers_acc += personalization_metric(fleet, log.final_w, rule);
    }
    double pers = pers_acc / static_cast<double>(c.seeds.size());
    summary.push_back({{"method", c.name}, {"personalization_loss", pers}});
    std::cout << c.name << ": mean per-client post-adaptation loss " << pers << "\n";
  }
  std::string out = opts.out_override.empty() ? "compare.csv" : opts.out_override;
  write_file_atomic(out, csv.str());
  write_file_atomic(out + ".summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_report(const CommonOpts& opts) {
  ExperimentConfig cfg = load(opts);
  std::filesystem::path base = std::filesystem::path(cfg.out_dir) / cfg.name;
  json agg = json::parse(read_file((base / "aggregate.json").string()));
  std::cout << "experiment " << cfg.name << "\n";
  std::printf("%10s %12s %20s %20s %8s\n", "seed", "tau", "final_grad_norm_sq", "running_avg",
              "active");
  for (const auto& row : agg["runs"]) {
    std::printf("%10llu %12d %20.6g %20.6g %8.3f\n",
                static_cast<unsigned long long>(row["seed"].get<std::uint64_t>()),
                row["tau_observed"].get<int>(),
                row.value("final_grad_norm_sq", 0.0), row.value("running_avg_grad_norm_sq", 0.0),
                row["time_avg_active_ratio"].get<double>());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous personalized federated-learning simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> compare_configs;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opts.config_path, "experiment config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", opts.out_override, "output path override");
    sub->add_option("--jobs", opts.jobs, "max parallel seed jobs");
    sub->add_option("--seed-override", opts.seed_override, "replace the config's seed list");
  };

  auto* run = app.add_subcommand("run", "execute the configured experiment per seed");
  add_common(run, true);

  auto* verify = app.add_subcommand("verify", "numerical validation suites");
  verify->require_subcommand(1);
  auto* gradcheck = verify->add_subcommand("gradcheck", "analytic gradients vs finite differences");
  add_common(gradcheck, true);
  auto* lemmas = verify->add_subcommand("lemmas", "analytic bound margins");
  add_common(lemmas, true);
  auto* rates = verify->add_subcommand("rates", "convergence-curve fits at theorem stepsizes");
  add_common(rates, true);

  auto* compare = app.add_subcommand("compare", "align runs from several configs by time");
  compare->add_option("--config", compare_configs, "config paths (repeat)")->required();
  compare->add_option("--out", opts.out_override, "output CSV path");
  compare->add_option("--jobs", opts.jobs, "max parallel seed jobs");
  compare->add_option("--seed-override", opts.seed_override, "replace the configs' seed lists");

  auto* report = app.add_subcommand("report", "print the aggregate of a finished run");
  add_common(report, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(opts);
    if (gradcheck->parsed()) return cmd_verify_gradcheck(opts);
    if (lemmas->parsed()) return cmd_verify_lemmas(opts);
    if (rates->parsed()) return cmd_verify_rates(opts);
    if (compare->parsed()) return cmd_compare(compare_configs, opts);
    if (report->parsed()) return cmd_report(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
