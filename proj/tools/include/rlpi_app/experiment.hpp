#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rlpi/envs.hpp"
#include "rlpi/glucosim.hpp"
#include "rlpi/lambda_pi.hpp"
#include "rlpi/metrics.hpp"
#include "rlpi_app/config.hpp"

namespace rlpi::app {

/// A linear tracking instance ready for run_rlpi, plus the environment
/// used for evaluation rollouts (uncertain mode for lqt_uncertain).
struct LqtInstance {
  envs::LQTEnv env;
  RlpiSetup setup;
  Environment eval_env;
};

LqtInstance make_lqt_instance(const ExperimentConfig& cfg, std::uint64_t seed);

struct TrackingStats {
  double mean_error = 0.0;
  double max_error = 0.0;
  int steps = 0;
};

/// Mean and max ‖x − r‖ over `rollouts` episodes of `steps` steps from
/// seeded initial conditions in the unit box.
TrackingStats tracking_error(const Environment& env, const Exosystem& exo, const Policy& policy,
                             int rollouts, int steps, std::uint64_t seed);

/// One learning job: a seed on an LQT environment, or a (subject, seed) pair.
struct RunKey {
  std::string id;
  int subject = -1;
  std::uint64_t seed = 1;
};

std::vector<RunKey> learn_runs(const ExperimentConfig& cfg);

struct LearnOutcome {
  RunKey key;
  bool ok = false;
  std::string error;
  int iterations = 0;
  int final_rho = 1;
  bool certified = false;
  /// Relative ∞-norm distance to the Riccati weights (lqt_validation only).
  std::optional<double> oracle_error;
  std::optional<metrics::GlycaemicReport> learning_report;
};

/// Learns and, on success, keeps the weights. Never throws for algorithm
/// failures; they are recorded in the outcome.
struct LearnedRun {
  LearnOutcome outcome;
  std::optional<qmodel::QWeights> weights;
  LearnTrace trace;
};

LearnedRun learn_one(const ExperimentConfig& cfg, const RunKey& key);

struct TrialOutcome {
  int trial = 0;
  std::string run_id;
  bool ok = false;
  std::string error;
  std::optional<metrics::GlycaemicReport> cgm_report;
  std::optional<metrics::GlycaemicReport> plasma_report;
  std::optional<TrackingStats> tracking;
};

struct CommandResult {
  /// 0 ok, 1 algorithm failure.
  int exit_code = 0;
  std::vector<std::string> messages;
};

/// Writes <dir>/learn/<run>/{weights.json, trace.jsonl, report.json} and the
/// reduced learn/summary.json, summary.csv and table.md.
CommandResult cmd_learn(const ExperimentConfig& cfg, const std::filesystem::path& dir, int workers);

/// Needs learn/summary.json (ConfigError otherwise). Writes
/// <dir>/evaluate/trial-XXXX/{trace.csv, report.json} and the reduced files.
CommandResult cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                           int workers);

/// Renders <dir>/report.md from the summaries present and returns it.
std::string cmd_report(const std::filesystem::path& dir);

}  // namespace rlpi::app
