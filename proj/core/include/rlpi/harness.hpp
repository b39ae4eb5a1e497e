#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rlpi/glucosim.hpp"
#include "rlpi/lambda_pi.hpp"
#include "rlpi/metrics.hpp"
#include "rlpi/qmodel.hpp"
#include "rlpi/system.hpp"

/// Closed-loop insulin dosing on the surrogate patient.
///
/// By default the controller sees absolute coordinates x = [x₁, x₂] with the
/// reference r = r*. The deviation variant x̃ = [x₁ − r*, x₂], r̃ = 0 drops the
/// reference from the basis. Costs and Δ² are multiplied by `cost_scale`.
namespace rlpi::harness {

enum class CollectionMode {
  /// Every iteration replays the same window: same start state, scenario and
  /// noise, so the data only change through the policy.
  kFrozenWindow,
  /// The simulation clock runs on across windows and days.
  kContinuous,
};

std::string collection_mode_name(CollectionMode m);
CollectionMode parse_collection_mode(const std::string& name);

struct GlucoseConfig {
  double target = 120.0;
  double S = 1.0;
  double R = 300.0;
  /// Δ(x̃)² = delta_scale · x̃ᵀx̃ before cost scaling.
  double delta_scale = 90.0;
  double cost_scale = 1e-7;
  bool deviation = false;
  double gamma = 0.95;
  double a_min = 0.0;
  double a_max = 5.0;
  /// Pump resolution in U; 0 disables quantization.
  double pump_increment = 0.0;
  int window_ticks = 144;
  double window_start = 360.0;
  CollectionMode mode = CollectionMode::kFrozenWindow;
  glucosim::VariabilityProfile profile = glucosim::VariabilityProfile::learning();
  glucosim::CgmConfig cgm;
  /// Replace x₁,k−6 by 0 until six past samples exist.
  bool cold_start = true;
  /// Initial plasma glucose; a negative value draws it from [70, 180].
  double initial_glucose = -1.0;
  std::uint64_t seed = 1;
};

Problem make_problem(const GlucoseConfig& cfg);
/// Absolute: quadratic monomials of z = [x₁, x₂, r, a] (K = 10). With r ≡ r*
/// the reference acts as the bias term.
/// Deviation: z = [x̃₁, x̃₂, x̃₁², x̃₂², a] (K = 15), reference slot held at 0.
std::shared_ptr<const qmodel::BasisDescriptor> make_basis(bool deviation = false);

struct PlantSettings {
  double start_minute = 0.0;
  int window_ticks = 144;
  CollectionMode mode = CollectionMode::kContinuous;
  glucosim::VariabilityProfile profile = glucosim::VariabilityProfile::none();
  glucosim::CgmConfig cgm;
  double pump_increment = 0.0;
  bool cold_start = true;
  double initial_glucose = 120.0;
  double target = 120.0;
  bool deviation = false;
  std::uint64_t seed = 1;
};

/// A surrogate patient seen through the controller's observation.
class GlucosePlant : public Plant {
 public:
  GlucosePlant(glucosim::PatientParams params, PlantSettings settings);

  int state_dim() const override { return 2; }
  int reference_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  Vec state() const override;
  Vec reference() const override;
  void advance(const Vec& a) override;
  bool episode_done() const override { return tick_ >= settings_.window_ticks; }
  void reset() override;

  const glucosim::PatientState& patient() const { return live_.patient; }
  glucosim::ControllerObservation observe() const { return live_.history.observe(); }
  double last_cgm() const { return live_.last_cgm; }
  double minute() const { return live_.minute; }
  int day() const { return live_.day; }
  const glucosim::DailyScenario& scenario() const { return live_.scenario; }
  /// Dose actually delivered (clamped and quantized) and meal rate of the last tick.
  double last_dose() const { return last_dose_; }
  double last_meal_rate() const { return last_meal_; }
  bool last_exercise() const { return last_exercise_; }
  int shifted_meals() const { return shifted_meals_; }

 private:
  struct Snapshot {
    glucosim::PatientState patient;
    double minute = 0.0;
    int day = 0;
    glucosim::DailyScenario scenario;
    glucosim::CgmHistory history;
    glucosim::CgmNoise noise;
    CounterRng cgm_rng{0};
    double last_cgm = 0.0;
  };

  glucosim::DailyScenario scenario_for(int day);

  glucosim::PatientParams params_;
  PlantSettings settings_;
  Snapshot start_;
  Snapshot live_;
  int tick_ = 0;
  double last_dose_ = 0.0;
  double last_meal_ = 0.0;
  bool last_exercise_ = false;
  int shifted_meals_ = 0;
};

/// Initial glucose for `cfg`: the configured value or a seeded draw in [70, 180].
double initial_glucose(const GlucoseConfig& cfg);

RlpiSetup make_setup(const glucosim::PatientParams& params, const GlucoseConfig& cfg,
                     int check_ticks = 576);
/// Defaults matching the harness: B = 144, τ = 1e-10, window replay switches.
RlpiConfig default_learn_config(const GlucoseConfig& cfg);

struct TrialConfig {
  int days = 14;
  glucosim::VariabilityProfile profile = glucosim::VariabilityProfile::evaluation();
  glucosim::CgmConfig cgm;
  double pump_increment = 0.0;
  bool cold_start = true;
  double target = 120.0;
  bool deviation = false;
  double a_min = 0.0;
  double a_max = 5.0;
  /// Negative draws from [70, 180].
  double initial_glucose = -1.0;
  std::uint64_t seed = 1;
};

struct TrialRow {
  int day = 0;
  double minute = 0.0;
  double G = 0.0;
  double cgm = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double insulin = 0.0;
  double meal_rate = 0.0;
  bool exercise = false;
};

struct TrialResult {
  std::vector<TrialRow> rows;
  metrics::GlycaemicReport cgm_report;
  metrics::GlycaemicReport plasma_report;
  bool died = false;
  std::string death_message;
  int shifted_meals = 0;
};

/// Closed loop under `policy` (coordinates per cfg.deviation) for cfg.days days from 00:00.
TrialResult run_trial(const glucosim::PatientParams& params, const Policy& policy,
                      const TrialConfig& cfg);

/// Columns: day, minute, G, CGM, x1, x2, insulin, meal_rate, exercise.
void write_trial_csv(std::ostream& os, const TrialResult& r);

}  // namespace rlpi::harness
