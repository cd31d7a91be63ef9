#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pafl/config.hpp"
#include "pafl/io.hpp"

using namespace pafl;

TEST_CASE("minimal config fills documented defaults") {
  ExperimentConfig cfg = load_config(R"({"horizon": {"server_steps": 100}})");
  CHECK(cfg.q == 10);
  CHECK(cfg.beta == 1.0);
  CHECK(cfg.fleet.n == 50);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(std::holds_alternative<OptionA>(cfg.rule));
  CHECK(rule_eta(cfg.rule) == 0.03);
  CHECK(cfg.schedule.async);
}

TEST_CASE("config round-trips through its resolved echo") {
  std::string text = R"({
    "name": "demo",
    "fleet": {"kind": "quadratic", "n": 4, "dim": 5, "heterogeneity": 0.7, "noise": 0.2},
    "rule": {"option": "B", "eta": 0.05, "alpha": 0.01, "batch": 2},
    "schedule": {"mode": "sync", "participation": 0.5},
    "q": 3, "beta": 0.9,
    "horizon": {"server_steps": 50},
    "seeds": [7, 8]
  })";
  ExperimentConfig a = load_config(text);
  ExperimentConfig b = load_config(dump_config(a));
  CHECK(config_equal(a, b));
  CHECK(dump_config(a) == dump_config(b));
  // echo carries defaults that the input omitted
  CHECK(dump_config(a).find("hvp_mode") != std::string::npos);
}

TEST_CASE("option C lambda must clear the fleet smoothness constant") {
  std::string text = R"({
    "fleet": {"n": 2, "dim": 3, "l_target": 1.0},
    "rule": {"option": "C", "lambda": 0.5},
    "horizon": {"server_steps": 10}
  })";
  CHECK_THROWS_WITH_AS(load_config(text), doctest::Contains("kappa"), ConfigError);
  // a compliant lambda loads fine
  std::string ok = R"({
    "fleet": {"n": 2, "dim": 3, "l_target": 1.0},
    "rule": {"option": "C", "lambda": 10.0},
    "horizon": {"server_steps": 10}
  })";
  CHECK_NOTHROW(load_config(ok));
}

TEST_CASE("invalid fields are rejected by name") {
  CHECK_THROWS_WITH_AS(load_config(R"({"horizon": {"server_steps": 100}, "q": 0})"),
                       doctest::Contains("'q'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      load_config(R"({"horizon": {"server_steps": 100}, "rule": {"option": "Z"}})"),
      doctest::Contains("rule.option"), ConfigError);
  CHECK_THROWS_WITH_AS(
      load_config(
          R"({"horizon": {"server_steps": 100}, "rule": {"option": "B", "alpha": -0.1}})"),
      doctest::Contains("rule.alpha"), ConfigError);
  CHECK_THROWS_WITH_AS(
      load_config(
          R"({"horizon": {"server_steps": 100}, "schedule": {"mode": "sync", "participation": 0.0}})"),
      doctest::Contains("participation"), ConfigError);
  CHECK_THROWS_WITH_AS(load_config(R"({"horizon": {"server_steps": 100}, "seeds": []})"),
                       doctest::Contains("seeds"), ConfigError);
  CHECK_THROWS_WITH_AS(load_config("not json"), doctest::Contains("parse"), ConfigError);
}

TEST_CASE("build helpers honor the schedule section") {
  ScheduleConfig paper;
  DelayModel m = build_delays(paper, 4);
  REQUIRE(m.per_client.size() == 4);
  // upload/download mean ratio 5 with uniform supports
  CHECK(m.per_client[0].download.kind == DistKind::kUniform);
  double dmean = 0.5 * (m.per_client[0].download.a + m.per_client[0].download.b);
  double umean = 0.5 * (m.per_client[0].upload.a + m.per_client[0].upload.b);
  CHECK(umean / dmean == doctest::Approx(5.0));

  ScheduleConfig constant;
  constant.delay_style = "constant";
  constant.download = 2.0;
  constant.upload = 7.0;
  DelayModel mc = build_delays(constant, 2);
  CHECK(mc.per_client[1].download.a == 2.0);
  CHECK(mc.per_client[1].upload.a == 7.0);
}

TEST_CASE("fleet builds deterministically from the config seed") {
  FleetConfig f;
  f.n = 3;
  f.dim = 4;
  f.fleet_seed = 11;
  Fleet a = build_fleet(f);
  Fleet b = build_fleet(f);
  CHECK(serialize_fleet(a) == serialize_fleet(b));
  f.fleet_seed = 12;
  CHECK(serialize_fleet(build_fleet(f)) != serialize_fleet(a));
}

TEST_CASE("theorem stepsize resolution overrides eta") {
  ExperimentConfig cfg = load_config(R"({
    "fleet": {"n": 2, "dim": 3},
    "rule": {"option": "A", "eta": 0.5},
    "horizon": {"server_steps": 400},
    "q": 2,
    "use_theorem_stepsize": true
  })");
  Fleet fleet = build_fleet(cfg.fleet);
  UpdateRule rule = resolved_rule(cfg, fleet);
  double L = fleet_global_L(fleet);
  CHECK(rule_eta(rule) == doctest::Approx(1.0 / (2.0 * std::sqrt(L * 400.0))).epsilon(1e-6));
}

TEST_CASE("csv emitters use the documented headers and full precision") {
  std::vector<MetricRow> metrics{{0, 1.5, 0.123456789012345678, 2.0, 1, 0.5}};
  std::string csv = metrics_csv(metrics);
  CHECK(csv.rfind("step,time,grad_norm_sq,loss,staleness,active_ratio\n", 0) == 0);
  CHECK(csv.find("0.12345678901234568") != std::string::npos);

  std::vector<StalenessRow> rows{{3, 1, 2, 1, 0}};
  std::string lcsv = ledger_csv(rows);
  CHECK(lcsv == "t,client,omega,staleness\n3,1,2,1\n");
}

TEST_CASE("atomic writes land complete files and leave no temporaries") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "pafl_io_test";
  fs::remove_all(dir);
  std::string target = (dir / "sub" / "file.txt").string();
  write_file_atomic(target, "hello\n");
  CHECK(read_file(target) == "hello\n");
  CHECK(!fs::exists(target + ".tmp"));
  write_file_atomic(target, "rewritten\n");
  CHECK(read_file(target) == "rewritten\n");
  fs::remove_all(dir);
}

TEST_CASE("run summary embeds the resolved config echo") {
  ExperimentConfig cfg = load_config(R"({"horizon": {"server_steps": 10},
    "fleet": {"n": 2, "dim": 3}})");
  RunLog log;
  log.n = 2;
  log.arrival_counts = {4, 6};
  log.metrics.push_back({0, 1.0, 0.5, 0.25, 0, 0.5});
  std::string s = run_summary_json(cfg, 7, log);
  CHECK(s.find("\"config\"") != std::string::npos);
  CHECK(s.find("\"tau_observed\"") != std::string::npos);
  CHECK(s.find("\"arrival_tv_distance\"") != std::string::npos);
}
