#include "rlpi_app/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rlpi/common.hpp"
#include "rlpi/glucosim.hpp"

namespace rlpi::app {

using json = nlohmann::ordered_json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config field '{}': {}", key, e.what()));
  }
}

void read_opt(const json& j, const char* key, std::optional<double>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read(j, key, v);
  out = v;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  if (!j.is_object()) throw ConfigError(fmt::format("config block '{}' must be an object", where));
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(fmt::format("unknown field '{}' in '{}'", k, where));
  }
}

json lqt_to_json(const LqtParams& p) {
  json j;
  j["episode_length"] = p.episode_length;
  j["init_radius"] = p.init_radius;
  j["delta_scale"] = p.delta_scale;
  j["disturbance_fraction"] = p.disturbance_fraction;
  j["check_steps"] = p.check_steps;
  j["eval_steps"] = p.eval_steps;
  return j;
}

void lqt_from_json(const json& j, LqtParams& p) {
  reject_unknown(j,
                 {"episode_length", "init_radius", "delta_scale", "disturbance_fraction",
                  "check_steps", "eval_steps"},
                 "environment.params");
  read(j, "episode_length", p.episode_length);
  read(j, "init_radius", p.init_radius);
  read(j, "delta_scale", p.delta_scale);
  read(j, "disturbance_fraction", p.disturbance_fraction);
  read(j, "check_steps", p.check_steps);
  read(j, "eval_steps", p.eval_steps);
}

json glucose_to_json(const GlucoseParams& p) {
  json j;
  j["target"] = p.target;
  j["delta_scale"] = p.delta_scale;
  j["cost_scale"] = p.cost_scale;
  j["deviation"] = p.deviation;
  j["mode"] = p.mode;
  j["window_start"] = p.window_start;
  j["pump_increment"] = p.pump_increment;
  j["cgm_amplitude"] = p.cgm_amplitude;
  j["cold_start"] = p.cold_start;
  j["check_ticks"] = p.check_ticks;
  return j;
}

void glucose_from_json(const json& j, GlucoseParams& p) {
  reject_unknown(j,
                 {"target", "delta_scale", "cost_scale", "deviation", "mode", "window_start",
                  "pump_increment", "cgm_amplitude", "cold_start", "check_ticks"},
                 "environment.params");
  read(j, "target", p.target);
  read(j, "delta_scale", p.delta_scale);
  read(j, "cost_scale", p.cost_scale);
  read(j, "deviation", p.deviation);
  read(j, "mode", p.mode);
  read(j, "window_start", p.window_start);
  read(j, "pump_increment", p.pump_increment);
  read(j, "cgm_amplitude", p.cgm_amplitude);
  read(j, "cold_start", p.cold_start);
  read(j, "check_ticks", p.check_ticks);
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& e = environment;
  if (e.name != "lqt_validation" && e.name != "lqt_uncertain" && e.name != "glucose") {
    throw ConfigError(fmt::format("unknown environment '{}'", e.name));
  }
  if (e.lqt.episode_length < 1) throw ConfigError("episode_length must be positive");
  if (!(e.lqt.init_radius > 0.0)) throw ConfigError("init_radius must be positive");
  if (!(e.lqt.delta_scale >= 0.0)) throw ConfigError("delta_scale must be non-negative");
  if (!(e.lqt.disturbance_fraction >= 0.0 && e.lqt.disturbance_fraction <= 1.0)) {
    throw ConfigError("disturbance_fraction must lie in [0, 1]");
  }
  if (e.lqt.check_steps < 1 || e.lqt.eval_steps < 1) throw ConfigError("step counts must be positive");
  harness::parse_collection_mode(e.glucose.mode);
  if (!(e.glucose.cost_scale > 0.0)) throw ConfigError("cost_scale must be positive");
  if (!(e.glucose.delta_scale >= 0.0)) throw ConfigError("glucose delta_scale must be non-negative");
  if (e.glucose.check_ticks < 1) throw ConfigError("check_ticks must be positive");

  const auto& a = algorithm;
  if (!(a.gamma > 0.0 && a.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(a.tau > 0.0)) throw ConfigError("tau must be positive");
  if (a.buffer_size < 1) throw ConfigError("buffer_size must be positive");
  LambdaSchedule::parse(a.lambda_rule);
  if (a.rho_start < 1) throw ConfigError("rho_start must be at least 1");
  if (a.rho_max < a.rho_start) throw ConfigError("rho_max must not be below rho_start");
  if (a.max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(a.S > 0.0) || !(a.R > 0.0)) throw ConfigError("S and R must be positive");
  if (!(a.a_min < a.a_max)) throw ConfigError("a_min must be below a_max");
  if (a.noise_lo.has_value() != a.noise_hi.has_value()) {
    throw ConfigError("noise_lo and noise_hi must be given together");
  }
  if (a.noise_lo && !(*a.noise_lo <= *a.noise_hi)) throw ConfigError("noise_lo exceeds noise_hi");

  glucosim::parse_cohort(cohort.name);
  if (cohort.subjects < 1) throw ConfigError("subjects must be positive");
  glucosim::VariabilityProfile::parse(scenario.learning_profile);
  glucosim::VariabilityProfile::parse(scenario.evaluation_profile);
  if (trials.trials < 1 || trials.days < 1 || trials.learning_days < 1) {
    throw ConfigError("trial counts and lengths must be positive");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["format"] = kConfigFormat;
  j["version"] = kConfigVersion;
  json env;
  env["name"] = c.environment.name;
  env["params"] = c.environment.is_glucose() ? glucose_to_json(c.environment.glucose)
                                             : lqt_to_json(c.environment.lqt);
  j["environment"] = env;

  const auto& a = c.algorithm;
  json alg;
  alg["gamma"] = a.gamma;
  alg["tau"] = a.tau;
  alg["buffer_size"] = a.buffer_size;
  alg["lambda_rule"] = a.lambda_rule;
  alg["rho_start"] = a.rho_start;
  alg["rho_max"] = a.rho_max;
  alg["max_iters"] = a.max_iters;
  alg["S"] = a.S;
  alg["R"] = a.R;
  alg["a_min"] = a.a_min;
  alg["a_max"] = a.a_max;
  alg["noise_lo"] = opt(a.noise_lo);
  alg["noise_hi"] = opt(a.noise_hi);
  alg["robustness"] = a.robustness;
  j["algorithm"] = alg;

  j["cohort"] = {{"name", c.cohort.name}, {"subjects", c.cohort.subjects}, {"seed", c.cohort.seed}};
  j["scenario"] = {{"learning_profile", c.scenario.learning_profile},
                   {"evaluation_profile", c.scenario.evaluation_profile}};
  j["trials"] = {{"trials", c.trials.trials},
                 {"days", c.trials.days},
                 {"learning_days", c.trials.learning_days}};
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  reject_unknown(j,
                 {"format", "version", "environment", "algorithm", "cohort", "scenario", "trials",
                  "seeds", "output_dir"},
                 "config");
  if (j.contains("format") && j["format"] != kConfigFormat) {
    throw ConfigError("config format tag is not " + std::string(kConfigFormat));
  }
  int version = kConfigVersion;
  read(j, "version", version);
  if (version != kConfigVersion) {
    throw ConfigError(fmt::format("config version {} is not supported (expected {})", version,
                                  kConfigVersion));
  }

  ExperimentConfig c;
  if (j.contains("environment")) {
    const json& e = j["environment"];
    reject_unknown(e, {"name", "params"}, "environment");
    read(e, "name", c.environment.name);
    if (e.contains("params")) {
      if (c.environment.is_glucose()) {
        glucose_from_json(e["params"], c.environment.glucose);
      } else {
        lqt_from_json(e["params"], c.environment.lqt);
      }
    }
  }
  if (j.contains("algorithm")) {
    const json& a = j["algorithm"];
    reject_unknown(a,
                   {"gamma", "tau", "buffer_size", "lambda_rule", "rho_start", "rho_max",
                    "max_iters", "S", "R", "a_min", "a_max", "noise_lo", "noise_hi", "robustness"},
                   "algorithm");
    auto& p = c.algorithm;
    read(a, "gamma", p.gamma);
    read(a, "tau", p.tau);
    read(a, "buffer_size", p.buffer_size);
    read(a, "lambda_rule", p.lambda_rule);
    read(a, "rho_start", p.rho_start);
    read(a, "rho_max", p.rho_max);
    read(a, "max_iters", p.max_iters);
    read(a, "S", p.S);
    read(a, "R", p.R);
    read(a, "a_min", p.a_min);
    read(a, "a_max", p.a_max);
    read_opt(a, "noise_lo", p.noise_lo);
    read_opt(a, "noise_hi", p.noise_hi);
    read(a, "robustness", p.robustness);
  }
  if (j.contains("cohort")) {
    reject_unknown(j["cohort"], {"name", "subjects", "seed"}, "cohort");
    read(j["cohort"], "name", c.cohort.name);
    read(j["cohort"], "subjects", c.cohort.subjects);
    read(j["cohort"], "seed", c.cohort.seed);
  }
  if (j.contains("scenario")) {
    reject_unknown(j["scenario"], {"learning_profile", "evaluation_profile"}, "scenario");
    read(j["scenario"], "learning_profile", c.scenario.learning_profile);
    read(j["scenario"], "evaluation_profile", c.scenario.evaluation_profile);
  }
  if (j.contains("trials")) {
    reject_unknown(j["trials"], {"trials", "days", "learning_days"}, "trials");
    read(j["trials"], "trials", c.trials.trials);
    read(j["trials"], "days", c.trials.days);
    read(j["trials"], "learning_days", c.trials.learning_days);
  }
  read(j, "seeds", c.seeds);
  read(j, "output_dir", c.output_dir);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::filesystem::path output_root() {
  const char* v = std::getenv(kOutputRootVar);
  return v != nullptr && *v != '\0' ? std::filesystem::path(v) : std::filesystem::path("rlpi-out");
}

std::filesystem::path experiment_dir(const ExperimentConfig& cfg,
                                     const std::optional<std::filesystem::path>& root) {
  return (root ? *root : output_root()) / cfg.output_dir;
}

harness::GlucoseConfig glucose_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  const GlucoseParams& p = cfg.environment.glucose;
  harness::GlucoseConfig g;
  g.target = p.target;
  g.S = cfg.algorithm.S;
  g.R = cfg.algorithm.R;
  g.delta_scale = p.delta_scale;
  g.cost_scale = p.cost_scale;
  g.deviation = p.deviation;
  g.gamma = cfg.algorithm.gamma;
  g.a_min = cfg.algorithm.a_min;
  g.a_max = cfg.algorithm.a_max;
  g.pump_increment = p.pump_increment;
  g.window_ticks = static_cast<int>(cfg.algorithm.buffer_size);
  g.window_start = p.window_start;
  g.mode = harness::parse_collection_mode(p.mode);
  g.profile = glucosim::VariabilityProfile::parse(cfg.scenario.learning_profile);
  g.cgm.amplitude = p.cgm_amplitude;
  g.cold_start = p.cold_start;
  g.seed = seed;
  return g;
}

RlpiConfig learn_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  const AlgorithmParams& a = cfg.algorithm;
  RlpiConfig c;
  if (cfg.environment.is_glucose()) {
    c = harness::default_learn_config(glucose_config(cfg, seed));
  } else {
    c.noise = {-1.0, 1.0};
    c.reset_each_iteration = true;
    c.robustness_options.steps = cfg.environment.lqt.check_steps;
  }
  c.schedule = LambdaSchedule::parse(a.lambda_rule);
  c.tau = a.tau;
  c.buffer_size = a.buffer_size;
  c.rho_start = a.rho_start;
  c.rho_max = a.rho_max;
  c.max_iters = a.max_iters;
  c.robustness = a.robustness;
  c.seed = seed;
  if (a.noise_lo) c.noise = {*a.noise_lo, *a.noise_hi};
  return c;
}

}  // namespace rlpi::app
