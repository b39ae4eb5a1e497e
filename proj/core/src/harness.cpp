#include "rlpi/harness.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

namespace rlpi::harness {

std::string collection_mode_name(CollectionMode m) {
  return m == CollectionMode::kFrozenWindow ? "frozen" : "continuous";
}

CollectionMode parse_collection_mode(const std::string& name) {
  if (name == "frozen") return CollectionMode::kFrozenWindow;
  if (name == "continuous") return CollectionMode::kContinuous;
  throw ConfigError(fmt::format("unknown collection mode '{}'", name));
}

Problem make_problem(const GlucoseConfig& cfg) {
  if (!(cfg.cost_scale > 0.0)) throw ConfigError("cost_scale must be positive");
  Problem p;
  Mat C(1, 2);
  C << 1.0, 0.0;
  p.cost = CostSpec::make(Mat::Constant(1, 1, cfg.cost_scale * cfg.S),
                          Mat::Constant(1, 1, cfg.cost_scale * cfg.R), cfg.gamma, C);
  p.uncertainty = UncertaintySpec::quadratic(cfg.cost_scale * cfg.delta_scale);
  p.bounds = ActionBounds::box(1, cfg.a_min, cfg.a_max);
  p.gamma_enabled = true;
  return p;
}

std::shared_ptr<const qmodel::BasisDescriptor> make_basis(bool deviation) {
  return std::make_shared<const qmodel::BasisDescriptor>(
      deviation ? qmodel::BasisDescriptor::state_action(2, 1, 1)
                : qmodel::BasisDescriptor::linear(2, 1, 1));
}

GlucosePlant::GlucosePlant(glucosim::PatientParams params, PlantSettings settings)
    : params_(std::move(params)), settings_(std::move(settings)) {
  params_.validate();
  if (settings_.window_ticks < 1) throw ConfigError("window must hold at least one tick");
  if (settings_.start_minute < 0.0 || settings_.start_minute >= 1440.0) {
    throw ConfigError("start minute outside the day");
  }
  Snapshot s;
  s.patient = glucosim::steady_state_at(params_, settings_.initial_glucose);
  s.minute = settings_.start_minute;
  s.day = 0;
  s.scenario = scenario_for(0);
  s.cgm_rng = CounterRng(settings_.seed, 0xC6A);
  s.last_cgm = glucosim::cgm_read(s.patient, settings_.cgm, s.noise, s.cgm_rng);
  if (!settings_.cold_start) {
    for (int k = 0; k < 6; ++k) s.history.push(s.last_cgm);
  }
  s.history.push(s.last_cgm);
  start_ = s;
  live_ = s;
}

glucosim::DailyScenario GlucosePlant::scenario_for(int day) {
  CounterRng rng = CounterRng(settings_.seed, 0x5CE0).split(static_cast<std::uint64_t>(day));
  glucosim::DailyScenario sc =
      glucosim::scenario_generate(glucosim::DailyScenario::nominal(), settings_.profile, rng);
  shifted_meals_ += sc.shifted_meals;
  return sc;
}

Vec GlucosePlant::state() const {
  const auto obs = live_.history.observe();
  Vec x(2);
  x << obs.x1 - (settings_.deviation ? settings_.target : 0.0), obs.x2;
  return x;
}

Vec GlucosePlant::reference() const {
  return Vec::Constant(1, settings_.deviation ? 0.0 : settings_.target);
}

void GlucosePlant::advance(const Vec& a) {
  double dose = std::max(0.0, a[0]);
  if (settings_.pump_increment > 0.0) {
    dose = settings_.pump_increment * std::floor(dose / settings_.pump_increment + 1e-9);
  }
  const double meal = live_.scenario.meal_rate(live_.minute);
  const glucosim::Intensity ex = live_.scenario.exercise_at(live_.minute);
  try {
    live_.patient = glucosim::patient_step(params_, live_.patient, dose, meal, ex);
  } catch (const SimulatedDeathError& e) {
    throw DivergenceError(e.what());
  }
  last_dose_ = dose;
  last_meal_ = meal;
  last_exercise_ = ex != glucosim::Intensity::kNone;
  live_.minute += glucosim::kTickMinutes;
  if (live_.minute >= 1440.0) {
    live_.minute -= 1440.0;
    ++live_.day;
    live_.scenario = scenario_for(live_.day);
  }
  live_.last_cgm = glucosim::cgm_read(live_.patient, settings_.cgm, live_.noise, live_.cgm_rng);
  live_.history.push(live_.last_cgm);
  ++tick_;
}

void GlucosePlant::reset() {
  if (settings_.mode == CollectionMode::kFrozenWindow) live_ = start_;
  tick_ = 0;
}

double initial_glucose(const GlucoseConfig& cfg) {
  if (cfg.initial_glucose > 0.0) return cfg.initial_glucose;
  CounterRng rng(cfg.seed, 0x6107);
  return rng.uniform(70.0, 180.0);
}

RlpiSetup make_setup(const glucosim::PatientParams& params, const GlucoseConfig& cfg,
                     int check_ticks) {
  RlpiSetup setup;
  setup.problem = make_problem(cfg);
  setup.basis = make_basis(cfg.deviation);
  PlantSettings learn;
  learn.start_minute = cfg.window_start;
  learn.window_ticks = cfg.window_ticks;
  learn.mode = cfg.mode;
  learn.profile = cfg.profile;
  learn.cgm = cfg.cgm;
  learn.pump_increment = cfg.pump_increment;
  learn.cold_start = cfg.cold_start;
  learn.initial_glucose = initial_glucose(cfg);
  learn.target = cfg.target;
  learn.deviation = cfg.deviation;
  learn.seed = cfg.seed;
  setup.make_learn_plant = [params, learn]() -> std::unique_ptr<Plant> {
    return std::make_unique<GlucosePlant>(params, learn);
  };
  PlantSettings check = learn;
  check.window_ticks = check_ticks;
  check.mode = CollectionMode::kContinuous;
  check.profile = glucosim::VariabilityProfile::none();
  check.cgm = glucosim::CgmConfig{};
  setup.make_check_plant = [params, check]() -> std::unique_ptr<Plant> {
    return std::make_unique<GlucosePlant>(params, check);
  };
  return setup;
}

RlpiConfig default_learn_config(const GlucoseConfig& cfg) {
  RlpiConfig c;
  c.buffer_size = static_cast<std::size_t>(cfg.window_ticks);
  c.tau = 1e-10;
  c.seed = cfg.seed;
  c.reset_each_iteration = cfg.mode == CollectionMode::kFrozenWindow;
  c.freeze_noise = cfg.mode == CollectionMode::kFrozenWindow;
  c.robustness_options.steps = 576;
  c.rho_max = 12;
  // Q⁰ on the scale of the cost, otherwise the gradient part of Γ dominates
  // the first targets.
  c.init.c_base = 1e-6;
  return c;
}

TrialResult run_trial(const glucosim::PatientParams& params, const Policy& policy,
                      const TrialConfig& cfg) {
  if (cfg.days < 1) throw ConfigError("a trial needs at least one day");
  PlantSettings s;
  s.start_minute = 0.0;
  s.window_ticks = cfg.days * glucosim::kTicksPerDay;
  s.mode = CollectionMode::kContinuous;
  s.profile = cfg.profile;
  s.cgm = cfg.cgm;
  s.pump_increment = cfg.pump_increment;
  s.cold_start = cfg.cold_start;
  s.target = cfg.target;
  s.deviation = cfg.deviation;
  s.seed = cfg.seed;
  if (cfg.initial_glucose > 0.0) {
    s.initial_glucose = cfg.initial_glucose;
  } else {
    CounterRng rng(cfg.seed, 0x6107);
    s.initial_glucose = rng.uniform(70.0, 180.0);
  }
  GlucosePlant plant(params, s);
  const ActionBounds bounds = ActionBounds::box(1, cfg.a_min, cfg.a_max);

  TrialResult out;
  out.rows.reserve(static_cast<std::size_t>(s.window_ticks));
  std::vector<double> cgm;
  std::vector<double> plasma;
  std::vector<double> doses;
  while (!plant.episode_done()) {
    const int day = plant.day();
    const double minute = plant.minute();
    const Vec a = bounds.clamp(policy(plant.state(), plant.reference()));
    try {
      plant.advance(a);
    } catch (const DivergenceError& e) {
      out.died = true;
      out.death_message = e.what();
      break;
    }
    const auto obs = plant.observe();
    TrialRow row;
    row.day = day;
    row.minute = minute;
    row.G = plant.patient().G;
    row.cgm = plant.last_cgm();
    row.x1 = obs.x1;
    row.x2 = obs.x2;
    row.insulin = plant.last_dose();
    row.meal_rate = plant.last_meal_rate();
    row.exercise = plant.last_exercise();
    cgm.push_back(row.x1);
    plasma.push_back(row.G);
    doses.push_back(row.insulin);
    out.rows.push_back(row);
  }
  out.shifted_meals = plant.shifted_meals();
  if (!out.rows.empty()) {
    const double days = static_cast<double>(out.rows.size()) / glucosim::kTicksPerDay;
    out.cgm_report = metrics::make_report(cgm, doses, days);
    out.plasma_report = metrics::make_report(plasma, doses, days);
  }
  return out;
}

void write_trial_csv(std::ostream& os, const TrialResult& r) {
  os << "day,minute,G,CGM,x1,x2,insulin,meal_rate,exercise\n";
  for (const auto& row : r.rows) {
    os << fmt::format("{},{},{},{},{},{},{},{},{}\n", row.day, row.minute, row.G, row.cgm, row.x1,
                      row.x2, row.insulin, row.meal_rate, row.exercise ? 1 : 0);
  }
}

}  // namespace rlpi::harness
