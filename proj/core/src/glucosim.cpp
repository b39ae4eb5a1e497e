#include "rlpi/glucosim.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace rlpi::glucosim {

std::string cohort_name(Cohort c) {
  switch (c) {
    case Cohort::kT1Adult: return "T1ADU";
    case Cohort::kT1Adolescent: return "T1ADO";
    case Cohort::kT1Child: return "T1CHIL";
    case Cohort::kT2Adult: return "T2ADU";
  }
  return "?";
}

Cohort parse_cohort(const std::string& name) {
  if (name == "T1ADU") return Cohort::kT1Adult;
  if (name == "T1ADO") return Cohort::kT1Adolescent;
  if (name == "T1CHIL") return Cohort::kT1Child;
  if (name == "T2ADU") return Cohort::kT2Adult;
  throw ConfigError(fmt::format("unknown cohort '{}'", name));
}

void PatientParams::validate() const {
  const std::array<double, 11> rates{si, sg, p2, ka1, ka2, ke, vi, kabs, bioavailability, vg,
                                     body_mass};
  for (double r : rates) {
    if (!(r > 0.0)) throw ConfigError(fmt::format("patient {}: rates must be positive", id));
  }
  if (!(basal_glucose >= 90.0 && basal_glucose <= 160.0)) {
    throw ConfigError(fmt::format("patient {}: basal glucose {} outside [90, 160]", id,
                                  basal_glucose));
  }
  if (secretion < 0.0 || (cohort != Cohort::kT2Adult && secretion != 0.0)) {
    throw ConfigError(fmt::format("patient {}: only type 2 patients secrete insulin", id));
  }
  if (exercise_sensitivity < 0.0) throw ConfigError("exercise sensitivity must be non-negative");
}

std::string intensity_name(Intensity i) {
  switch (i) {
    case Intensity::kNone: return "none";
    case Intensity::kLight: return "light";
    case Intensity::kModerate: return "moderate";
    case Intensity::kIntense: return "intense";
  }
  return "?";
}

Intensity parse_intensity(const std::string& name) {
  if (name == "none") return Intensity::kNone;
  if (name == "light") return Intensity::kLight;
  if (name == "moderate") return Intensity::kModerate;
  if (name == "intense") return Intensity::kIntense;
  throw ConfigError(fmt::format("unknown exercise intensity '{}'", name));
}

double intensity_gain(Intensity i) {
  switch (i) {
    case Intensity::kLight: return 1.2;
    case Intensity::kModerate: return 1.5;
    case Intensity::kIntense: return 1.9;
    case Intensity::kNone: break;
  }
  return 1.0;
}

PatientState equilibrium(const PatientParams& p) {
  PatientState s;
  s.G = p.basal_glucose;
  return s;
}

namespace {

double holding_rate(const PatientParams& p, double G0) {
  if (G0 >= p.basal_glucose) return 0.0;
  const double X = p.sg * (p.basal_glucose - G0) / G0;
  const double ip = X / p.si;
  return ip * p.ke * p.vi * p.body_mass / 1000.0;
}

}  // namespace

double holding_dose(const PatientParams& p, double G0) {
  return kTickMinutes * holding_rate(p, G0);
}

PatientState steady_state_at(const PatientParams& p, double G0) {
  if (!(G0 > 0.0)) throw ConfigError("steady state needs positive glucose");
  PatientState s;
  s.G = G0;
  const double u = holding_rate(p, G0);
  if (u > 0.0) {
    s.X = p.sg * (p.basal_glucose - G0) / G0;
    s.ip = s.X / p.si;
    s.isc1 = u / p.ka1;
    s.isc2 = u / p.ka2;
  }
  return s;
}

namespace {

using StateVec = std::array<double, 9>;

StateVec pack(const PatientState& s) {
  return {s.G, s.X, s.isc1, s.isc2, s.ip, s.qgut, s.E, s.infused, s.absorbed};
}

PatientState unpack(const StateVec& v) {
  PatientState s;
  s.G = v[0];
  s.X = v[1];
  s.isc1 = v[2];
  s.isc2 = v[3];
  s.ip = v[4];
  s.qgut = v[5];
  s.E = v[6];
  s.infused = v[7];
  s.absorbed = v[8];
  return s;
}

StateVec deriv(const PatientParams& p, const StateVec& v, double u, double meal, bool exercising) {
  const double G = v[0];
  const double X = v[1];
  const double isc1 = v[2];
  const double isc2 = v[3];
  const double ip = v[4];
  const double qgut = v[5];
  const double E = v[6];
  const double ra = p.bioavailability * p.kabs * qgut;
  const double secretion = p.secretion * std::max(0.0, G - p.basal_glucose);
  StateVec d{};
  d[0] = p.sg * (p.basal_glucose - G) - E * X * G + ra / (p.vg * p.body_mass);
  d[1] = -p.p2 * X + p.p2 * p.si * ip;
  d[2] = u - p.ka1 * isc1;
  d[3] = p.ka1 * isc1 - p.ka2 * isc2;
  d[4] = 1000.0 * p.ka2 * isc2 / (p.vi * p.body_mass) - p.ke * ip + secretion;
  d[5] = 1000.0 * meal - p.kabs * qgut;
  d[6] = exercising ? 0.0 : -(E - 1.0) / kExerciseWashout;
  d[7] = u;
  d[8] = p.ka2 * isc2;
  return d;
}

StateVec axpy(const StateVec& x, double h, const StateVec& d) {
  StateVec out;
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + h * d[k];
  return out;
}

}  // namespace

PatientState patient_step(const PatientParams& p, const PatientState& s, double insulin_units,
                          double meal_rate, Intensity exercise) {
  if (insulin_units < 0.0 || meal_rate < 0.0) {
    throw PreconditionError("patient_step: insulin and meal rate must be non-negative");
  }
  const double u = insulin_units / kTickMinutes;
  const bool exercising = exercise != Intensity::kNone;
  StateVec v = pack(s);
  if (exercising) v[6] = 1.0 + (intensity_gain(exercise) - 1.0) * p.exercise_sensitivity;
  constexpr int kSub = 5;
  const double h = kTickMinutes / kSub;
  for (int k = 0; k < kSub; ++k) {
    const StateVec k1 = deriv(p, v, u, meal_rate, exercising);
    const StateVec k2 = deriv(p, axpy(v, 0.5 * h, k1), u, meal_rate, exercising);
    const StateVec k3 = deriv(p, axpy(v, 0.5 * h, k2), u, meal_rate, exercising);
    const StateVec k4 = deriv(p, axpy(v, h, k3), u, meal_rate, exercising);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  PatientState out = unpack(v);
  if (!(out.G > 0.0)) {
    throw SimulatedDeathError(fmt::format("patient {}: plasma glucose reached {:.3f} mg/dL", p.id,
                                          out.G));
  }
  out.E = std::max(out.E, 1.0);
  return out;
}

double cgm_read(const PatientState& s, const CgmConfig& cfg, CgmNoise& noise, CounterRng& rng) {
  if (cfg.amplitude > 0.0) {
    const double innovation = cfg.amplitude * std::sqrt(1.0 - cfg.phi * cfg.phi) * rng.normal();
    noise.e = cfg.phi * noise.e + innovation;
  }
  return std::clamp(s.G + noise.e, cfg.lo, cfg.hi);
}

ControllerObservation observation(const std::vector<double>& history) {
  if (history.empty()) throw PreconditionError("observation needs at least one CGM sample");
  const std::size_t k = history.size() - 1;
  const double x1 = history[k];
  const double past = k >= 6 ? history[k - 6] : 0.0;
  return {x1, (x1 - past) / 30.0};
}

void CgmHistory::push(double v) {
  window_.push_back(v);
  if (window_.size() > 7) window_.pop_front();
}

ControllerObservation CgmHistory::observe() const {
  if (window_.empty()) throw PreconditionError("observation needs at least one CGM sample");
  const double x1 = window_.back();
  const double past = window_.size() == 7 ? window_.front() : 0.0;
  return {x1, (x1 - past) / 30.0};
}

DailyScenario DailyScenario::nominal() {
  DailyScenario s;
  const std::array<double, 6> hours{7, 10, 13, 15, 18, 23};
  const std::array<double, 6> cho{70, 30, 90, 30, 90, 25};
  const std::array<double, 6> dur{30, 15, 45, 15, 45, 20};
  for (std::size_t k = 0; k < hours.size(); ++k) s.meals.push_back({hours[k] * 60.0, cho[k], dur[k]});
  s.exercise.push_back({16.0 * 60.0, Intensity::kModerate, 30.0});
  return s;
}

void DailyScenario::validate() const {
  for (const auto& m : meals) {
    if (!(m.cho > 0.0) || !(m.duration > 0.0) || m.start < 0.0 || m.start + m.duration > 1440.0) {
      throw ConfigError("meal outside the day or with non-positive CHO/duration");
    }
  }
  for (const auto& e : exercise) {
    if (!(e.duration > 0.0) || e.start < 0.0 || e.start + e.duration > 1440.0) {
      throw ConfigError("exercise session outside the day or with non-positive duration");
    }
  }
}

double DailyScenario::meal_rate(double t, double dt) const {
  double grams = 0.0;
  for (const auto& m : meals) {
    const double overlap = std::min(t + dt, m.start + m.duration) - std::max(t, m.start);
    if (overlap > 0.0) grams += m.cho * overlap / m.duration;
  }
  return grams / dt;
}

Intensity DailyScenario::exercise_at(double t) const {
  for (const auto& e : exercise) {
    if (t >= e.start && t < e.start + e.duration) return e.intensity;
  }
  return Intensity::kNone;
}

VariabilityProfile VariabilityProfile::learning() {
  return {"learning", 15.0, 0.15, 0.15, 15.0, 0.20, true};
}

VariabilityProfile VariabilityProfile::evaluation() {
  return {"evaluation", 60.0, 0.50, 0.50, 60.0, 0.50, true};
}

VariabilityProfile VariabilityProfile::none() { return {"none", 0, 0, 0, 0, 0, false}; }

VariabilityProfile VariabilityProfile::parse(const std::string& name) {
  if (name == "learning") return learning();
  if (name == "evaluation") return evaluation();
  if (name == "none") return none();
  throw ConfigError(fmt::format("unknown variability profile '{}'", name));
}

namespace {

double clamp_start(double start, double duration) {
  return std::clamp(start, 0.0, 1440.0 - duration);
}

}  // namespace

DailyScenario scenario_generate(const DailyScenario& nominal, const VariabilityProfile& profile,
                                CounterRng& rng) {
  auto sym = [&rng](double half) { return half > 0.0 ? rng.uniform(-half, half) : 0.0; };
  DailyScenario out;
  for (const auto& m : nominal.meals) {
    Meal d;
    d.cho = m.cho * (1.0 + sym(profile.cho_frac));
    d.duration = m.duration * (1.0 + sym(profile.meal_duration_frac));
    d.start = clamp_start(m.start + sym(profile.meal_shift), d.duration);
    out.meals.push_back(d);
  }
  for (const auto& e : nominal.exercise) {
    ExerciseSession d;
    const double shift = sym(profile.exercise_shift);
    d.intensity = profile.random_intensity ? static_cast<Intensity>(1 + rng.below(3)) : e.intensity;
    d.duration = e.duration * (1.0 + sym(profile.exercise_duration_frac));
    d.start = clamp_start(e.start + shift, d.duration);
    out.exercise.push_back(d);
  }
  std::stable_sort(out.meals.begin(), out.meals.end(),
                   [](const Meal& a, const Meal& b) { return a.start < b.start; });
  for (std::size_t k = 1; k < out.meals.size(); ++k) {
    const double prev_end = out.meals[k - 1].start + out.meals[k - 1].duration;
    if (out.meals[k].start < prev_end) {
      out.meals[k].start = prev_end;
      out.meals[k].duration = std::min(out.meals[k].duration, 1440.0 - prev_end);
      ++out.shifted_meals;
    }
  }
  out.meals.erase(std::remove_if(out.meals.begin(), out.meals.end(),
                                 [](const Meal& m) { return !(m.duration > 0.0); }),
                  out.meals.end());
  out.validate();
  return out;
}

std::string scenario_to_json(const DailyScenario& s) {
  nlohmann::ordered_json j;
  j["format"] = "rlpi.scenario/1";
  j["meals"] = nlohmann::json::array();
  for (const auto& m : s.meals) {
    j["meals"].push_back({{"start_min", m.start}, {"cho_g", m.cho}, {"duration_min", m.duration}});
  }
  j["exercise"] = nlohmann::json::array();
  for (const auto& e : s.exercise) {
    j["exercise"].push_back({{"start_min", e.start},
                             {"intensity", intensity_name(e.intensity)},
                             {"duration_min", e.duration}});
  }
  j["shifted_meals"] = s.shifted_meals;
  return j.dump(2);
}

DailyScenario scenario_from_json(const std::string& text) {
  DailyScenario s;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& m : j.at("meals")) {
      s.meals.push_back({m.at("start_min").get<double>(), m.at("cho_g").get<double>(),
                         m.at("duration_min").get<double>()});
    }
    for (const auto& e : j.at("exercise")) {
      s.exercise.push_back({e.at("start_min").get<double>(),
                            parse_intensity(e.at("intensity").get<std::string>()),
                            e.at("duration_min").get<double>()});
    }
    s.shifted_meals = j.value("shifted_meals", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("scenario JSON: {}", e.what()));
  }
  s.validate();
  return s;
}

namespace {

struct Range {
  double lo;
  double hi;
};

struct CohortRanges {
  Range body_mass;
  Range si;
  Range sg;
  Range basal;
  Range p2;
  Range ka;
  Range kabs;
  Range exercise;
  Range secretion;
};

CohortRanges ranges_for(Cohort c) {
  switch (c) {
    case Cohort::kT1Adult:
      return {{60, 90}, {6e-4, 1.1e-3}, {0.010, 0.016}, {135, 160}, {0.020, 0.030},
              {0.014, 0.022}, {0.020, 0.040}, {0.8, 1.2}, {0, 0}};
    case Cohort::kT1Adolescent:
      return {{40, 65}, {4e-4, 8e-4}, {0.010, 0.016}, {135, 160}, {0.020, 0.030},
              {0.014, 0.022}, {0.020, 0.040}, {0.8, 1.2}, {0, 0}};
    case Cohort::kT1Child:
      return {{20, 40}, {8e-4, 1.5e-3}, {0.012, 0.018}, {135, 160}, {0.020, 0.030},
              {0.016, 0.024}, {0.025, 0.045}, {0.8, 1.2}, {0, 0}};
    case Cohort::kT2Adult:
      return {{70, 110}, {2e-4, 5e-4}, {0.008, 0.014}, {120, 160}, {0.015, 0.025},
              {0.012, 0.020}, {0.020, 0.040}, {0.6, 1.0}, {0.05, 0.15}};
  }
  throw ConfigError("unknown cohort");
}

}  // namespace

std::vector<PatientParams> make_cohort(Cohort cohort, int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("cohort size must be at least 1");
  const CohortRanges r = ranges_for(cohort);
  CounterRng base(seed, 0xC0407 + static_cast<std::uint64_t>(cohort));
  std::vector<PatientParams> out;
  for (int k = 0; k < count; ++k) {
    CounterRng rng = base.split(static_cast<std::uint64_t>(k));
    auto draw = [&rng](const Range& range) { return rng.uniform(range.lo, range.hi); };
    PatientParams p;
    p.cohort = cohort;
    p.id = k;
    p.body_mass = draw(r.body_mass);
    p.si = draw(r.si);
    p.sg = draw(r.sg);
    p.basal_glucose = draw(r.basal);
    p.p2 = draw(r.p2);
    p.ka1 = draw(r.ka);
    p.ka2 = draw(r.ka);
    p.kabs = draw(r.kabs);
    p.exercise_sensitivity = draw(r.exercise);
    p.secretion = cohort == Cohort::kT2Adult ? draw(r.secretion) : 0.0;
    p.egp = p.sg * p.basal_glucose * p.vg;
    p.validate();
    out.push_back(p);
  }
  return out;
}

std::string cohort_ranges_markdown() {
  std::string out =
      "| cohort | body mass kg | SI | SG 1/min | Gb mg/dL | p2 1/min | ka 1/min | kabs 1/min | "
      "exercise mult. | secretion |\n|---|---|---|---|---|---|---|---|---|---|\n";
  for (Cohort c : {Cohort::kT1Adult, Cohort::kT1Adolescent, Cohort::kT1Child, Cohort::kT2Adult}) {
    const CohortRanges r = ranges_for(c);
    auto f = [](const Range& x) { return fmt::format("{:g}–{:g}", x.lo, x.hi); };
    out += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n", cohort_name(c),
                       f(r.body_mass), f(r.si), f(r.sg), f(r.basal), f(r.p2), f(r.ka), f(r.kabs),
                       f(r.exercise), f(r.secretion));
  }
  return out;
}

}  // namespace rlpi::glucosim
