// rlpi: learn, evaluate, verify and report experiments.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "rlpi/common.hpp"
#include "rlpi_app/config.hpp"
#include "rlpi_app/experiment.hpp"
#include "rlpi_app/pool.hpp"
#include "rlpi_app/suites.hpp"

namespace {

using namespace rlpi;
using namespace rlpi::app;

constexpr int kExitOk = 0;
constexpr int kExitAlgorithm = 1;
constexpr int kExitConfig = 2;

struct Overrides {
  std::string config_path;
  std::optional<std::string> env;
  std::optional<std::string> lambda_rule;
  std::optional<double> tau;
  std::optional<std::size_t> buffer_size;
  std::optional<int> rho_start;
  std::optional<int> rho_max;
  std::optional<int> max_iters;
  std::optional<double> gamma;
  std::optional<int> subjects;
  std::optional<std::string> cohort;
  std::optional<int> trials;
  std::optional<int> days;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> output_dir;
  bool no_robustness = false;
};

void add_config_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_path, "Experiment config (JSON)");
  cmd->add_option("--env", o.env, "lqt_validation, lqt_uncertain or glucose");
  cmd->add_option("--lambda-rule", o.lambda_rule, "tanh:<c> or const:<v> (const:0 is value iteration)");
  cmd->add_option("--tau", o.tau, "Convergence threshold on the buffer");
  cmd->add_option("--buffer-size", o.buffer_size, "Transitions per iteration (B)");
  cmd->add_option("--rho-start", o.rho_start, "First robustness level");
  cmd->add_option("--rho-max", o.rho_max, "Last robustness level");
  cmd->add_option("--max-iters", o.max_iters, "Iteration cap per robustness level");
  cmd->add_option("--gamma", o.gamma, "Discount factor");
  cmd->add_option("--subjects", o.subjects, "Virtual subjects in the cohort");
  cmd->add_option("--cohort", o.cohort, "T1ADU, T1ADO, T1CHIL or T2ADU");
  cmd->add_option("--trials", o.trials, "Evaluation trials");
  cmd->add_option("--days", o.days, "Days per evaluation trial");
  cmd->add_option("--seeds", o.seeds, "Learning seeds");
  cmd->add_option("-o,--output-dir", o.output_dir, "Experiment directory (relative to the output root)");
  cmd->add_flag("--no-robustness", o.no_robustness, "Skip the robustness certification");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.env) c.environment.name = *o.env;
  if (o.lambda_rule) c.algorithm.lambda_rule = *o.lambda_rule;
  if (o.tau) c.algorithm.tau = *o.tau;
  if (o.buffer_size) c.algorithm.buffer_size = *o.buffer_size;
  if (o.rho_start) c.algorithm.rho_start = *o.rho_start;
  if (o.rho_max) c.algorithm.rho_max = *o.rho_max;
  if (o.max_iters) c.algorithm.max_iters = *o.max_iters;
  if (o.gamma) c.algorithm.gamma = *o.gamma;
  if (o.subjects) c.cohort.subjects = *o.subjects;
  if (o.cohort) c.cohort.name = *o.cohort;
  if (o.trials) c.trials.trials = *o.trials;
  if (o.days) c.trials.days = *o.days;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.no_robustness) c.algorithm.robustness = false;
  c.validate();
  return c;
}

int finish(const CommandResult& r, const std::string& what) {
  for (const auto& m : r.messages) std::cerr << "rlpi " << what << ": " << m << '\n';
  return r.exit_code == 0 ? kExitOk : kExitAlgorithm;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust lambda-policy-iteration tracking control experiments"};
  app.require_subcommand(1);
  std::optional<std::string> root_flag;
  int workers = default_workers();
  app.add_option("--output-root", root_flag,
                 fmt::format("Directory holding experiments (default ${} or ./rlpi-out)", kOutputRootVar));
  app.add_option("-j,--workers", workers, "Parallel runs")->check(CLI::PositiveNumber);

  Overrides learn_o, eval_o, report_o;
  bool dump_config = false;
  CLI::App* learn = app.add_subcommand("learn", "Run the learning algorithm per subject and seed");
  add_config_flags(learn, learn_o);
  learn->add_flag("--dump-config", dump_config, "Print the resolved config and exit");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Closed-loop trials with learned weights");
  add_config_flags(evaluate, eval_o);
  std::string level = "quick";
  CLI::App* verify = app.add_subcommand("verify", "Oracle and property suites");
  verify->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  CLI::App* report = app.add_subcommand("report", "Render report.md from learn/evaluate outputs");
  add_config_flags(report, report_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::optional<std::filesystem::path> root =
      root_flag ? std::optional<std::filesystem::path>(*root_flag) : std::nullopt;
  try {
    if (*learn) {
      const ExperimentConfig cfg = resolve(learn_o);
      if (dump_config) {
        std::cout << config_to_json(cfg);
        return kExitOk;
      }
      const auto dir = experiment_dir(cfg, root);
      const int code = finish(cmd_learn(cfg, dir, workers), "learn");
      std::cout << "learn: " << (dir / "learn" / "summary.json").string() << '\n';
      return code;
    }
    if (*evaluate) {
      const ExperimentConfig cfg = resolve(eval_o);
      const auto dir = experiment_dir(cfg, root);
      const int code = finish(cmd_evaluate(cfg, dir, workers), "evaluate");
      std::cout << "evaluate: " << (dir / "evaluate" / "summary.json").string() << '\n';
      return code;
    }
    if (*verify) {
      bool all = true;
      for (const CheckResult& r : verify_suites(level)) {
        all = all && r.passed;
        std::cout << fmt::format("{} {} ({:.2f} s): {}\n", r.passed ? "PASS" : "FAIL", r.name,
                                 r.seconds, r.detail);
      }
      return all ? kExitOk : kExitAlgorithm;
    }
    if (*report) {
      const ExperimentConfig cfg = resolve(report_o);
      std::cout << cmd_report(experiment_dir(cfg, root));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "rlpi: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "rlpi: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "rlpi: " << e.what() << '\n';
    return kExitAlgorithm;
  }
  return kExitConfig;
}
