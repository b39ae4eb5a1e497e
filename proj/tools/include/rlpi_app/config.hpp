#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rlpi/harness.hpp"
#include "rlpi/lambda_pi.hpp"

namespace rlpi::app {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kConfigFormat = "rlpi.experiment";
/// Environment variable naming the directory that holds every experiment.
inline constexpr const char* kOutputRootVar = "RLPI_OUTPUT_ROOT";

/// Linear tracking environments. `lqt_uncertain` adds Δ(x)² = delta_scale·xᵀx
/// and a disturbance of disturbance_fraction·Δ aligned with x during evaluation.
struct LqtParams {
  int episode_length = 8;
  double init_radius = 1.0;
  double delta_scale = 0.05;
  double disturbance_fraction = 0.9;
  int check_steps = 200;
  int eval_steps = 100;
};

struct GlucoseParams {
  double target = 120.0;
  double delta_scale = 90.0;
  double cost_scale = 1e-7;
  bool deviation = false;
  std::string mode = "frozen";
  double window_start = 360.0;
  double pump_increment = 0.0;
  double cgm_amplitude = 0.0;
  bool cold_start = true;
  int check_ticks = 576;
};

struct EnvironmentSpec {
  /// lqt_validation, lqt_uncertain or glucose.
  std::string name = "lqt_validation";
  LqtParams lqt;
  GlucoseParams glucose;

  bool is_glucose() const { return name == "glucose"; }
};

struct AlgorithmParams {
  double gamma = 0.95;
  double tau = 1e-10;
  std::size_t buffer_size = 144;
  std::string lambda_rule = "tanh:0.7";
  int rho_start = 1;
  int rho_max = 12;
  int max_iters = 2000;
  double S = 1.0;
  double R = 300.0;
  double a_min = 0.0;
  double a_max = 5.0;
  /// Exploration noise interval; unset means the environment default.
  std::optional<double> noise_lo;
  std::optional<double> noise_hi;
  bool robustness = true;
};

struct CohortSpec {
  std::string name = "T1ADU";
  int subjects = 10;
  std::uint64_t seed = 1;
};

struct ScenarioSpec {
  std::string learning_profile = "learning";
  std::string evaluation_profile = "evaluation";
};

struct TrialSpec {
  /// Evaluation trials, assigned to subjects round-robin.
  int trials = 20;
  int days = 14;
  /// Days of the learning-phase report run under the learning profile.
  int learning_days = 1;
};

struct ExperimentConfig {
  EnvironmentSpec environment;
  AlgorithmParams algorithm;
  CohortSpec cohort;
  ScenarioSpec scenario;
  TrialSpec trials;
  std::vector<std::uint64_t> seeds{1};
  /// Relative paths resolve against the output root.
  std::string output_dir = "experiment";

  /// Throws ConfigError on any invalid field.
  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Root from the environment variable, else "rlpi-out".
std::filesystem::path output_root();
std::filesystem::path experiment_dir(const ExperimentConfig& cfg,
                                     const std::optional<std::filesystem::path>& root = {});

harness::GlucoseConfig glucose_config(const ExperimentConfig& cfg, std::uint64_t seed);
/// Learning settings for `cfg`'s environment, with the algorithm block applied.
RlpiConfig learn_config(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace rlpi::app
