#include "pafl/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pafl/verify.hpp"

namespace pafl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& reason) {
  throw ConfigError("config field '" + field + "': " + reason);
}

template <typename T>
T take(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(key, e.what());
  }
}

FleetConfig parse_fleet(const json& j) {
  FleetConfig f;
  std::string kind = take<std::string>(j, "kind", "quadratic");
  f.kind = task_kind_from_string(kind);
  f.n = take<int>(j, "n", f.n);
  f.dim = take<int>(j, "dim", f.dim);
  f.heterogeneity = take<double>(j, "heterogeneity", f.heterogeneity);
  f.noise = take<double>(j, "noise", f.noise);
  f.fleet_seed = take<std::uint64_t>(j, "fleet_seed", f.fleet_seed);
  f.opts.rows = take<int>(j, "rows", f.opts.rows);
  f.opts.l_target = take<double>(j, "l_target", f.opts.l_target);
  f.opts.cond = take<double>(j, "cond", f.opts.cond);
  f.opts.identity_hessian = take<bool>(j, "identity_hessian", f.opts.identity_hessian);
  f.opts.pool_size = take<int>(j, "pool_size", f.opts.pool_size);
  f.opts.noise_scale = f.noise;
  if (f.n < 1) fail("fleet.n", "must be >= 1");
  if (f.dim < 1) fail("fleet.dim", "must be >= 1");
  if (f.heterogeneity < 0.0) fail("fleet.heterogeneity", "must be >= 0");
  if (f.noise < 0.0) fail("fleet.noise", "must be >= 0");
  return f;
}

UpdateRule parse_rule(const json& j) {
  std::string option = take<std::string>(j, "option", "A");
  if (option == "A" || option == "a") {
    OptionA r;
    r.eta = take<double>(j, "eta", r.eta);
    r.batch = take<int>(j, "batch", r.batch);
    if (r.batch < 1) fail("rule.batch", "must be >= 1");
    return r;
  }
  if (option == "B" || option == "b") {
    OptionB r;
    r.eta = take<double>(j, "eta", r.eta);
    r.alpha = take<double>(j, "alpha", r.alpha);
    if (r.alpha < 0.0) fail("rule.alpha", "must be >= 0");
    std::string hvp = take<std::string>(j, "hvp_mode", "first_order");
    if (hvp == "first_order") r.hvp_mode = HvpMode::kFirstOrder;
    else if (hvp == "exact") r.hvp_mode = HvpMode::kExact;
    else if (hvp == "dropped") r.hvp_mode = HvpMode::kDropped;
    else fail("rule.hvp_mode", "expected first_order|exact|dropped, got '" + hvp + "'");
    r.hvp_delta = take<double>(j, "hvp_delta", r.hvp_delta);
    r.batch = take<int>(j, "batch", r.batch);
    r.batch_inner = take<int>(j, "batch_inner", r.batch_inner);
    r.batch_hess = take<int>(j, "batch_hess", r.batch_hess);
    if (r.batch < 1 || r.batch_inner < 1 || r.batch_hess < 1)
      fail("rule.batch*", "all batch sizes must be >= 1");
    return r;
  }
  if (option == "C" || option == "c") {
    OptionC r;
    r.eta = take<double>(j, "eta", r.eta);
    r.lambda = take<double>(j, "lambda", r.lambda);
    if (!(r.lambda > 0.0)) fail("rule.lambda", "must be > 0");
    r.nu = take<double>(j, "nu", r.nu);
    r.inner_steps = take<int>(j, "inner_steps", r.inner_steps);
    r.inner_stepsize = take<double>(j, "inner_stepsize", r.inner_stepsize);
    std::string stop = take<std::string>(j, "inner_stop", "both");
    if (stop == "grad_norm") r.inner_stop = InnerStop::kGradNorm;
    else if (stop == "fixed_steps") r.inner_stop = InnerStop::kFixedSteps;
    else if (stop == "both") r.inner_stop = InnerStop::kBoth;
    else fail("rule.inner_stop", "expected grad_norm|fixed_steps|both, got '" + stop + "'");
    r.batch = take<int>(j, "batch", r.batch);
    if (r.batch < 1) fail("rule.batch", "must be >= 1");
    if (r.inner_steps < 1) fail("rule.inner_steps", "must be >= 1");
    return r;
  }
  fail("rule.option", "expected A|B|C, got '" + option + "'");
}

ScheduleConfig parse_schedule(const json& j) {
  ScheduleConfig s;
  std::string mode = take<std::string>(j, "mode", "async");
  if (mode == "async") s.async = true;
  else if (mode == "sync") s.async = false;
  else fail("schedule.mode", "expected async|sync, got '" + mode + "'");
  s.delay_style = take<std::string>(j, "delay_style", s.delay_style);
  if (s.delay_style != "paper" && s.delay_style != "constant")
    fail("schedule.delay_style", "expected paper|constant, got '" + s.delay_style + "'");
  s.spread = take<double>(j, "spread", s.spread);
  s.scale = take<double>(j, "scale", s.scale);
  s.download = take<double>(j, "download", s.download);
  s.upload = take<double>(j, "upload", s.upload);
  s.participation = take<double>(j, "participation", s.participation);
  if (s.scale <= 0.0) fail("schedule.scale", "must be > 0");
  if (s.spread < 0.0 || s.spread >= 1.0) fail("schedule.spread", "must be in [0, 1)");
  if (s.download < 0.0 || s.upload < 0.0) fail("schedule.download/upload", "must be >= 0");
  if (!s.async && (s.participation <= 0.0 || s.participation > 1.0))
    fail("schedule.participation", "must be in (0, 1]");
  return s;
}

}  // namespace

Fleet build_fleet(const FleetConfig& cfg) {
  RngStream rng = derive_stream(cfg.fleet_seed, {static_cast<std::uint64_t>(StreamPurpose::kFleet)});
  return make_fleet(cfg.kind, cfg.n, cfg.heterogeneity, cfg.dim, rng, cfg.opts);
}

DelayModel build_delays(const ScheduleConfig& cfg, int n) {
  if (cfg.delay_style == "constant") return DelayModel::constant(n, cfg.download, cfg.upload);
  return DelayModel::paper_style(n, cfg.spread, cfg.scale);
}

UpdateRule resolved_rule(const ExperimentConfig& cfg, const Fleet& fleet) {
  UpdateRule rule = cfg.rule;
  if (cfg.use_theorem_stepsize) {
    if (cfg.horizon.server_steps <= 0)
      throw ConfigError("config field 'horizon.server_steps': theorem stepsize needs a step horizon");
    RngStream crng = derive_stream(1, {0});
    TaskConstants consts = measure_constants(fleet, 500, crng);
    double eta = theorem_stepsize(rule, consts, cfg.q, cfg.horizon.server_steps);
    std::visit([eta](auto& r) { r.eta = eta; }, rule);
  }
  return rule;
}

ExperimentConfig load_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.name = take<std::string>(j, "name", cfg.name);
  if (j.contains("fleet")) cfg.fleet = parse_fleet(j.at("fleet"));
  if (j.contains("rule")) cfg.rule = parse_rule(j.at("rule"));
  if (j.contains("schedule")) cfg.schedule = parse_schedule(j.at("schedule"));
  cfg.q = take<int>(j, "q", cfg.q);
  cfg.beta = take<double>(j, "beta", cfg.beta);
  if (j.contains("horizon")) {
    cfg.horizon.server_steps = take<int>(j.at("horizon"), "server_steps", 0);
    cfg.horizon.sim_time = take<double>(j.at("horizon"), "sim_time", 0.0);
  }
  cfg.seeds = take<std::vector<std::uint64_t>>(j, "seeds", cfg.seeds);
  cfg.out_dir = take<std::string>(j, "out_dir", cfg.out_dir);
  cfg.use_theorem_stepsize = take<bool>(j, "use_theorem_stepsize", cfg.use_theorem_stepsize);

  if (cfg.q < 1) fail("q", "must be >= 1");
  if (cfg.beta <= 0.0) fail("beta", "must be > 0");
  if (cfg.horizon.server_steps <= 0 && cfg.horizon.sim_time <= 0.0)
    fail("horizon", "either server_steps or sim_time must be positive");
  if (cfg.seeds.empty()) fail("seeds", "at least one seed required");
  if (rule_eta(cfg.rule) <= 0.0 && !cfg.use_theorem_stepsize) fail("rule.eta", "must be > 0");

  // Option C admissibility is a load-time check against the actual fleet:
  // Lemma 5 needs lambda >= kappa L with kappa > 1.
  if (const auto* c = std::get_if<OptionC>(&cfg.rule)) {
    Fleet fleet = build_fleet(cfg.fleet);
    double L = fleet_global_L(fleet);
    if (!(c->lambda > L))
      fail("rule.lambda",
           "must exceed the fleet smoothness constant L = " + std::to_string(L) +
               " (smoothness of the envelope requires lambda >= kappa*L with kappa > 1)");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_config(buf.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["fleet"] = {{"kind", to_string(cfg.fleet.kind)},
                {"n", cfg.fleet.n},
                {"dim", cfg.fleet.dim},
                {"heterogeneity", cfg.fleet.heterogeneity},
                {"noise", cfg.fleet.noise},
                {"fleet_seed", cfg.fleet.fleet_seed},
                {"rows", cfg.fleet.opts.rows},
                {"l_target", cfg.fleet.opts.l_target},
                {"cond", cfg.fleet.opts.cond},
                {"identity_hessian", cfg.fleet.opts.identity_hessian},
                {"pool_size", cfg.fleet.opts.pool_size}};
  json rule;
  if (const auto* a = std::get_if<OptionA>(&cfg.rule)) {
    rule = {{"option", "A"}, {"eta", a->eta}, {"batch", a->batch}};
  } else if (const auto* b = std::get_if<OptionB>(&cfg.rule)) {
    const char* hvp = b->hvp_mode == HvpMode::kExact        ? "exact"
                      : b->hvp_mode == HvpMode::kFirstOrder ? "first_order"
                                                            : "dropped";
    rule = {{"option", "B"},      {"eta", b->eta},
            {"alpha", b->alpha},  {"hvp_mode", hvp},
            {"hvp_delta", b->hvp_delta}, {"batch", b->batch},
            {"batch_inner", b->batch_inner}, {"batch_hess", b->batch_hess}};
  } else {
    const auto& c = std::get<OptionC>(cfg.rule);
    const char* stop = c.inner_stop == InnerStop::kGradNorm     ? "grad_norm"
                       : c.inner_stop == InnerStop::kFixedSteps ? "fixed_steps"
                                                                : "both";
    rule = {{"option", "C"},          {"eta", c.eta},
            {"lambda", c.lambda},     {"nu", c.nu},
            {"inner_steps", c.inner_steps}, {"inner_stepsize", c.inner_stepsize},
            {"inner_stop", stop},     {"batch", c.batch}};
  }
  j["rule"] = rule;
  j["schedule"] = {{"mode", cfg.schedule.async ? "async" : "sync"},
                   {"delay_style", cfg.schedule.delay_style},
                   {"spread", cfg.schedule.spread},
                   {"scale", cfg.schedule.scale},
                   {"download", cfg.schedule.download},
                   {"upload", cfg.schedule.upload},
                   {"participation", cfg.schedule.participation}};
  j["q"] = cfg.q;
  j["beta"] = cfg.beta;
  j["horizon"] = {{"server_steps", cfg.horizon.server_steps}, {"sim_time", cfg.horizon.sim_time}};
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["use_theorem_stepsize"] = cfg.use_theorem_stepsize;
  return j.dump(2);
}

bool config_equal(const ExperimentConfig& a, const ExperimentConfig& b) {
  return dump_config(a) == dump_config(b);
}

}  // namespace pafl
