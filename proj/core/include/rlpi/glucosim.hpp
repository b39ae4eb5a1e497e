#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlpi/common.hpp"
#include "rlpi/rng.hpp"

/// Surrogate virtual patient. This is a small Bergman-type minimal model with
/// subcutaneous insulin and gut absorption; it is not the commercial
/// simulator used for clinical-grade studies and reproduces none of its
/// numbers.
///
///   dG/dt    = SG·(Gb − G) − E·X·G + Ra/(Vg·BW)
///   dX/dt    = −p2·X + p2·SI·Ip
///   dIsc1/dt = u − ka1·Isc1
///   dIsc2/dt = ka1·Isc1 − ka2·Isc2
///   dIp/dt   = 1000·ka2·Isc2/(Vi·BW) − ke·Ip + σ·max(0, G − Gb)
///   dQgut/dt = 1000·meal − kabs·Qgut,   Ra = f·kabs·Qgut
///
/// G mg/dL, X 1/min, Isc U, Ip mU/L, Qgut mg, u U/min, meal g/min.
namespace rlpi::glucosim {

enum class Cohort { kT1Adult, kT1Adolescent, kT1Child, kT2Adult };

std::string cohort_name(Cohort c);
/// Accepts T1ADU, T1ADO, T1CHIL, T2ADU.
Cohort parse_cohort(const std::string& name);

struct PatientParams {
  Cohort cohort = Cohort::kT1Adult;
  int id = 0;
  /// Insulin sensitivity SI, (1/min) per (mU/L).
  double si = 8e-4;
  /// Glucose effectiveness SG, 1/min.
  double sg = 0.012;
  /// Remote insulin action rate p2, 1/min.
  double p2 = 0.025;
  /// Subcutaneous absorption rates, 1/min.
  double ka1 = 0.018;
  double ka2 = 0.018;
  /// Plasma insulin clearance, 1/min.
  double ke = 0.138;
  /// Insulin distribution volume, L/kg.
  double vi = 0.12;
  /// Gut absorption rate, 1/min.
  double kabs = 0.03;
  /// CHO bioavailability.
  double bioavailability = 0.9;
  /// Glucose distribution volume, dL/kg.
  double vg = 1.6;
  double body_mass = 70.0;
  /// Basal glucose with no insulin on board, mg/dL.
  double basal_glucose = 145.0;
  /// Endogenous glucose production at basal, mg/kg/min (= SG·Gb·Vg).
  double egp = 0.0;
  /// Multiplier applied to the exercise sensitivity gains.
  double exercise_sensitivity = 1.0;
  /// Residual secretion gain σ, (mU/L/min) per (mg/dL). Zero for type 1.
  double secretion = 0.0;

  /// Throws ConfigError on non-positive rates or basal glucose outside [90, 160].
  void validate() const;
};

struct PatientState {
  double G = 145.0;
  double X = 0.0;
  double isc1 = 0.0;
  double isc2 = 0.0;
  double ip = 0.0;
  double qgut = 0.0;
  double E = 1.0;
  /// Cumulative insulin infused into the first depot and absorbed into
  /// plasma, U; used by the conservation check.
  double infused = 0.0;
  double absorbed = 0.0;
};

enum class Intensity { kNone, kLight, kModerate, kIntense };

std::string intensity_name(Intensity i);
Intensity parse_intensity(const std::string& name);
/// Sensitivity multiplier during a session: 1.2, 1.5, 1.9 (1 for none).
double intensity_gain(Intensity i);

inline constexpr double kTickMinutes = 5.0;
inline constexpr int kTicksPerDay = 288;
/// Exercise washout time constant, min.
inline constexpr double kExerciseWashout = 60.0;

/// Zero-insulin equilibrium: G = Gb, everything else zero.
PatientState equilibrium(const PatientParams& p);
/// Steady state with plasma glucose G0. Below Gb the insulin compartments are
/// set to the constant infusion that holds G0; above Gb insulin is zero.
PatientState steady_state_at(const PatientParams& p, double G0);
/// Constant infusion (U per 5 min) that holds G0 < Gb at steady state.
double holding_dose(const PatientParams& p, double G0);

/// One 5-minute tick, RK4 with 1-minute sub-steps. Insulin is delivered
/// uniformly over the tick. Exercise at intensity ≠ none pins E to its gain;
/// otherwise E relaxes toward 1. Throws SimulatedDeathError if G ≤ 0.
PatientState patient_step(const PatientParams& p, const PatientState& s, double insulin_units,
                          double meal_rate, Intensity exercise);

struct CgmConfig {
  /// Stationary noise standard deviation, mg/dL. 0 disables noise.
  double amplitude = 0.0;
  /// AR(1) coefficient.
  double phi = 0.7;
  double lo = 40.0;
  double hi = 400.0;
};

/// AR(1) sensor error state.
struct CgmNoise {
  double e = 0.0;
};

double cgm_read(const PatientState& s, const CgmConfig& cfg, CgmNoise& noise, CounterRng& rng);

struct ControllerObservation {
  double x1 = 0.0;
  double x2 = 0.0;
};

/// x₁ = last sample; x₂ = (x₁,k − x₁,k−6)/30 with 0 in place of samples that
/// do not exist yet.
ControllerObservation observation(const std::vector<double>& history);

/// Rolling window of the last seven CGM samples.
class CgmHistory {
 public:
  void push(double v);
  ControllerObservation observe() const;
  std::size_t size() const { return window_.size(); }
  void clear() { window_.clear(); }

 private:
  std::deque<double> window_;
};

struct Meal {
  double start = 0.0;
  double cho = 0.0;
  double duration = 0.0;
};

struct ExerciseSession {
  double start = 0.0;
  Intensity intensity = Intensity::kModerate;
  double duration = 0.0;
};

/// Times in minutes after midnight.
struct DailyScenario {
  std::vector<Meal> meals;
  std::vector<ExerciseSession> exercise;
  /// Meals moved to resolve overlaps during generation.
  int shifted_meals = 0;

  /// Six meals at 07, 10, 13, 15, 18, 23 h, [70, 30, 90, 30, 90, 25] g over
  /// [30, 15, 45, 15, 45, 20] min; 30 min of moderate exercise at 16:00.
  static DailyScenario nominal();
  void validate() const;
  /// Mean CHO rate (g/min) over [t, t + dt).
  double meal_rate(double t, double dt = kTickMinutes) const;
  /// Intensity of the session covering minute t, if any.
  Intensity exercise_at(double t) const;
};

struct VariabilityProfile {
  std::string name;
  double meal_shift = 0.0;
  double cho_frac = 0.0;
  double meal_duration_frac = 0.0;
  double exercise_shift = 0.0;
  double exercise_duration_frac = 0.0;
  bool random_intensity = true;

  /// ±15 min, ±15 % CHO, ±15 % duration, ±15 min exercise, ±20 % exercise duration.
  static VariabilityProfile learning();
  /// ±60 min, ±50 %, ±50 %, ±60 min, ±50 %.
  static VariabilityProfile evaluation();
  static VariabilityProfile none();
  static VariabilityProfile parse(const std::string& name);
};

DailyScenario scenario_generate(const DailyScenario& nominal, const VariabilityProfile& profile,
                                CounterRng& rng);

std::string scenario_to_json(const DailyScenario& s);
DailyScenario scenario_from_json(const std::string& text);

/// Uniform parameter ranges per cohort; see `cohort_ranges_markdown`.
std::vector<PatientParams> make_cohort(Cohort cohort, int count, std::uint64_t seed);
std::string cohort_ranges_markdown();

}  // namespace rlpi::glucosim
