#include "rlpi_app/experiment.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rlpi/harness.hpp"
#include "rlpi/qmodel.hpp"
#include "rlpi_app/pool.hpp"

namespace rlpi::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json report_json(const metrics::GlycaemicReport& r) { return json::parse(metrics::report_to_json(r)); }

metrics::GlycaemicReport report_from_json(const json& j) {
  metrics::GlycaemicReport r;
  r.bg_mean = j.at("bg_mean");
  r.bg_min = j.at("bg_min");
  r.bg_max = j.at("bg_max");
  r.bands.normo = j.at("tir_70_180");
  r.bands.mild_hypo = j.at("hypo_50_70");
  r.bands.severe_hypo = j.at("hypo_below_50");
  r.bands.mild_hyper = j.at("hyper_180_250");
  r.bands.severe_hyper = j.at("hyper_above_250");
  r.lbgi = j.at("lbgi");
  r.hbgi = j.at("hbgi");
  r.tdi = j.at("tdi");
  return r;
}

glucosim::PatientParams subject_params(const ExperimentConfig& cfg, int subject) {
  const auto cohort = glucosim::make_cohort(glucosim::parse_cohort(cfg.cohort.name),
                                            cfg.cohort.subjects, cfg.cohort.seed);
  return cohort.at(static_cast<std::size_t>(subject));
}

harness::TrialConfig trial_config(const ExperimentConfig& cfg, int days, const std::string& profile,
                                  std::uint64_t seed) {
  const GlucoseParams& p = cfg.environment.glucose;
  harness::TrialConfig t;
  t.days = days;
  t.profile = glucosim::VariabilityProfile::parse(profile);
  t.cgm.amplitude = p.cgm_amplitude;
  t.pump_increment = p.pump_increment;
  t.cold_start = p.cold_start;
  t.target = p.target;
  t.deviation = p.deviation;
  t.a_min = cfg.algorithm.a_min;
  t.a_max = cfg.algorithm.a_max;
  t.seed = seed;
  return t;
}

ActionBounds policy_bounds(const ExperimentConfig& cfg, int m) {
  if (cfg.environment.is_glucose()) return ActionBounds::box(1, cfg.algorithm.a_min, cfg.algorithm.a_max);
  return ActionBounds::box(m, -1e6, 1e6);
}

json outcome_json(const LearnOutcome& o) {
  json j;
  j["id"] = o.key.id;
  j["subject"] = o.key.subject;
  j["seed"] = o.key.seed;
  j["ok"] = o.ok;
  j["error"] = o.error;
  j["iterations"] = o.iterations;
  j["final_rho"] = o.final_rho;
  j["certified"] = o.certified;
  j["oracle_error"] = o.oracle_error ? json(*o.oracle_error) : json(nullptr);
  j["learning_report"] = o.learning_report ? report_json(*o.learning_report) : json(nullptr);
  return j;
}

std::string csv_number(double v) { return fmt::format("{}", v); }

struct LqtRow {
  int step = 0;
  Vec x;
  Vec r;
  Vec a;
  double error = 0.0;
};

std::vector<LqtRow> lqt_rollout(const Environment& env, const Exosystem& exo, const Policy& policy,
                                int steps, std::uint64_t seed) {
  SimulatedPlant plant(env, exo, {1.0, 1.0}, static_cast<std::size_t>(steps), seed);
  std::vector<LqtRow> rows;
  rows.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; !plant.episode_done(); ++k) {
    LqtRow row{k, plant.state(), plant.reference(), Vec(), 0.0};
    row.a = policy(row.x, row.r);
    row.error = (row.x - row.r).norm();
    plant.advance(row.a);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_lqt_csv(std::ostream& os, const std::vector<LqtRow>& rows) {
  if (rows.empty()) return;
  os << "step";
  for (Eigen::Index i = 0; i < rows[0].x.size(); ++i) os << ",x" << i + 1;
  for (Eigen::Index i = 0; i < rows[0].r.size(); ++i) os << ",r" << i + 1;
  for (Eigen::Index i = 0; i < rows[0].a.size(); ++i) os << ",a" << i + 1;
  os << ",error\n";
  for (const auto& row : rows) {
    os << row.step;
    for (double v : row.x) os << ',' << csv_number(v);
    for (double v : row.r) os << ',' << csv_number(v);
    for (double v : row.a) os << ',' << csv_number(v);
    os << ',' << csv_number(row.error) << '\n';
  }
}

json plot_manifest(const ExperimentConfig& cfg, const std::vector<TrialOutcome>& trials) {
  json plots = json::array();
  for (const auto& t : trials) {
    if (!t.ok) continue;
    const std::string src = fmt::format("trial-{:04d}/trace.csv", t.trial);
    if (cfg.environment.is_glucose()) {
      plots.push_back({{"id", fmt::format("trial-{:04d}-day0", t.trial)},
                       {"kind", "line"},
                       {"source", src},
                       {"filter", {{"day", 0}}},
                       {"x", "minute"},
                       {"y", {"cgm", "G"}},
                       {"y2", {"insulin"}},
                       {"bands", {70, 180}}});
    } else {
      plots.push_back({{"id", fmt::format("trial-{:04d}", t.trial)},
                       {"kind", "line"},
                       {"source", src},
                       {"x", "step"},
                       {"y", {"x1", "r1", "error"}}});
    }
    break;
  }
  if (cfg.environment.is_glucose()) {
    plots.push_back({{"id", "tir-per-trial"},
                     {"kind", "bar"},
                     {"source", "reports.csv"},
                     {"x", "trial"},
                     {"y", {"tir_70_180"}}});
  }
  return {{"format", "rlpi.plots/1"}, {"plots", plots}};
}

}  // namespace

LqtInstance make_lqt_instance(const ExperimentConfig& cfg, std::uint64_t seed) {
  const LqtParams& p = cfg.environment.lqt;
  const bool uncertain = cfg.environment.name == "lqt_uncertain";
  if (!uncertain && cfg.environment.name != "lqt_validation") {
    throw ConfigError("not a linear tracking environment: " + cfg.environment.name);
  }
  const envs::LQTEnv base = uncertain ? envs::LQTEnv::uncertain_benchmark() : envs::LQTEnv::validation();
  const envs::LQTEnv env(base.A(), base.B(), base.H(),
                         CostSpec::make(base.cost().S, base.cost().R, cfg.algorithm.gamma));
  RlpiSetup setup;
  setup.problem.cost = env.cost();
  setup.problem.bounds = ActionBounds::box(env.m(), -1e6, 1e6);
  setup.problem.gamma_enabled = uncertain;
  if (uncertain) setup.problem.uncertainty = UncertaintySpec::quadratic(p.delta_scale);
  setup.basis = std::make_shared<const qmodel::BasisDescriptor>(
      qmodel::BasisDescriptor::linear(env.n(), env.n_r(), env.m()));
  const SimulatedPlant::InitialBox box{p.init_radius, p.init_radius};
  const auto episode = static_cast<std::size_t>(p.episode_length);
  setup.make_learn_plant = [env, box, episode, seed]() -> std::unique_ptr<Plant> {
    return std::make_unique<SimulatedPlant>(env.environment(), env.exosystem(), box, episode, seed);
  };
  setup.make_check_plant = [env, box, episode, seed]() -> std::unique_ptr<Plant> {
    return std::make_unique<SimulatedPlant>(env.environment(), env.exosystem(), box, episode,
                                            mix64(seed ^ 0xC4ECull));
  };
  Environment eval = env.environment();
  if (uncertain) {
    eval = envs::make_uncertain(
        eval, setup.problem.uncertainty.with_aligned_realization(p.disturbance_fraction));
  }
  return {env, std::move(setup), std::move(eval)};
}

TrackingStats tracking_error(const Environment& env, const Exosystem& exo, const Policy& policy,
                             int rollouts, int steps, std::uint64_t seed) {
  TrackingStats s;
  double sum = 0.0;
  for (int k = 0; k < rollouts; ++k) {
    for (const auto& row : lqt_rollout(env, exo, policy, steps, seed + static_cast<std::uint64_t>(k))) {
      sum += row.error;
      s.max_error = std::max(s.max_error, row.error);
      ++s.steps;
    }
  }
  s.mean_error = s.steps > 0 ? sum / s.steps : 0.0;
  return s;
}

std::vector<RunKey> learn_runs(const ExperimentConfig& cfg) {
  std::vector<RunKey> out;
  if (!cfg.environment.is_glucose()) {
    for (auto s : cfg.seeds) out.push_back({fmt::format("seed-{}", s), -1, s});
    return out;
  }
  for (int i = 0; i < cfg.cohort.subjects; ++i) {
    for (auto s : cfg.seeds) {
      out.push_back({fmt::format("{}-{:03d}-seed-{}", cfg.cohort.name, i, s), i, s});
    }
  }
  return out;
}

LearnedRun learn_one(const ExperimentConfig& cfg, const RunKey& key) {
  LearnedRun run;
  run.outcome.key = key;
  const RlpiConfig c = learn_config(cfg, key.seed);
  try {
    RlpiResult res;
    std::optional<LqtInstance> lqt;
    std::optional<glucosim::PatientParams> params;
    if (cfg.environment.is_glucose()) {
      params = subject_params(cfg, key.subject);
      const harness::GlucoseConfig g = glucose_config(cfg, key.seed);
      res = run_rlpi(harness::make_setup(*params, g, cfg.environment.glucose.check_ticks), c);
    } else {
      lqt = make_lqt_instance(cfg, key.seed);
      res = run_rlpi(lqt->setup, c);
    }
    run.outcome.ok = true;
    run.outcome.iterations = res.trace.iterations;
    run.outcome.final_rho = res.trace.final_rho;
    run.outcome.certified = res.trace.certified;
    if (lqt && cfg.environment.name == "lqt_validation") {
      const auto oracle = envs::lqt_riccati_oracle(lqt->env, lqt->setup.basis);
      run.outcome.oracle_error = (res.w.w - oracle.w.w).lpNorm<Eigen::Infinity>() /
                                 oracle.w.w.lpNorm<Eigen::Infinity>();
    }
    if (params) {
      const auto trial = harness::run_trial(
          *params, res.policy,
          trial_config(cfg, cfg.trials.learning_days, cfg.scenario.learning_profile, key.seed));
      if (trial.died) {
        run.outcome.error = "learning-phase trial: " + trial.death_message;
      } else {
        run.outcome.learning_report = trial.cgm_report;
      }
    }
    run.weights = std::move(res.w);
    run.trace = std::move(res.trace);
  } catch (const LearningError& e) {
    run.outcome.error = e.what();
    run.trace = e.trace();
    run.outcome.iterations = static_cast<int>(run.trace.records.size());
    run.outcome.final_rho = run.trace.final_rho;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    run.outcome.error = e.what();
  }
  return run;
}

CommandResult cmd_learn(const ExperimentConfig& cfg, const fs::path& dir, int workers) {
  cfg.validate();
  const fs::path learn_dir = dir / "learn";
  write_file(dir / "config.json", config_to_json(cfg));
  const std::vector<RunKey> keys = learn_runs(cfg);

  // Each job owns learn/<id>/; nothing else is written until the reduce step.
  struct Job {
    LearnOutcome outcome;
    std::string config_error;
  };
  const auto jobs = parallel_map<Job>(keys.size(), workers, [&](std::size_t i) {
    Job job;
    try {
      LearnedRun run = learn_one(cfg, keys[i]);
      const fs::path run_dir = learn_dir / keys[i].id;
      fs::create_directories(run_dir);
      std::ostringstream trace;
      write_trace_jsonl(trace, run.trace);
      write_file(run_dir / "trace.jsonl", trace.str());
      if (run.weights) {
        write_file(run_dir / "weights.json", qmodel::weights_to_json(*run.weights) + "\n");
      } else {
        fs::remove(run_dir / "weights.json");
      }
      write_file(run_dir / "report.json", outcome_json(run.outcome).dump(2) + "\n");
      job.outcome = std::move(run.outcome);
    } catch (const std::exception& e) {
      job.outcome.key = keys[i];
      job.config_error = e.what();
    }
    return job;
  });

  CommandResult result;
  json runs = json::array();
  std::ostringstream csv;
  csv << "id,ok,iterations,final_rho,certified,oracle_error\n";
  std::vector<metrics::GlycaemicReport> reports;
  std::vector<double> iterations;
  for (const auto& job : jobs) {
    if (!job.config_error.empty()) throw ConfigError(job.outcome.key.id + ": " + job.config_error);
    const LearnOutcome& o = job.outcome;
    runs.push_back(outcome_json(o));
    csv << fmt::format("{},{},{},{},{},{}\n", o.key.id, o.ok ? 1 : 0, o.iterations, o.final_rho,
                       o.certified ? 1 : 0, o.oracle_error ? csv_number(*o.oracle_error) : "");
    if (!o.ok) {
      result.exit_code = 1;
      result.messages.push_back(fmt::format("{} (seed {}): {}", o.key.id, o.key.seed, o.error));
    } else {
      iterations.push_back(o.iterations);
      if (o.learning_report) reports.push_back(*o.learning_report);
      if (!o.error.empty()) {
        result.exit_code = 1;
        result.messages.push_back(fmt::format("{}: {}", o.key.id, o.error));
      }
    }
  }
  json summary;
  summary["format"] = "rlpi.learn-summary/1";
  summary["environment"] = cfg.environment.name;
  summary["lambda_rule"] = cfg.algorithm.lambda_rule;
  summary["runs"] = runs;
  write_file(learn_dir / "summary.json", summary.dump(2) + "\n");
  write_file(learn_dir / "summary.csv", csv.str());

  std::string table = fmt::format("Converged runs: {} of {}\n", iterations.size(), jobs.size());
  if (!iterations.empty()) {
    double mean = 0.0;
    for (double v : iterations) mean += v;
    mean /= static_cast<double>(iterations.size());
    double var = 0.0;
    for (double v : iterations) var += (v - mean) * (v - mean);
    const double sd = iterations.size() > 1 ? std::sqrt(var / static_cast<double>(iterations.size() - 1)) : 0.0;
    table += fmt::format("Iterations till convergence: {:.1f} ± {:.1f}\n", mean, sd);
  }
  if (!reports.empty()) {
    table += "\n" + metrics::aggregate_markdown({{cfg.algorithm.lambda_rule, metrics::cohort_aggregate(reports)}});
  }
  write_file(learn_dir / "table.md", table);
  return result;
}

CommandResult cmd_evaluate(const ExperimentConfig& cfg, const fs::path& dir, int workers) {
  cfg.validate();
  const fs::path learn_dir = dir / "learn";
  const fs::path summary_path = learn_dir / "summary.json";
  if (!fs::exists(summary_path)) {
    throw ConfigError(fmt::format("no learned weights under '{}'; run learn first", learn_dir.string()));
  }
  const json summary = json::parse(read_file(summary_path));
  std::vector<RunKey> keys;
  std::vector<bool> ok;
  for (const auto& r : summary.at("runs")) {
    keys.push_back({r.at("id").get<std::string>(), r.at("subject").get<int>(), r.at("seed").get<std::uint64_t>()});
    ok.push_back(r.at("ok").get<bool>());
  }
  if (keys.empty()) throw ConfigError("learn summary lists no runs");

  const fs::path eval_dir = dir / "evaluate";
  const int n = cfg.trials.trials;
  const auto trials = parallel_map<TrialOutcome>(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    TrialOutcome t;
    t.trial = static_cast<int>(i);
    const std::size_t run = i % keys.size();
    t.run_id = keys[run].id;
    const fs::path weights_path = learn_dir / keys[run].id / "weights.json";
    if (!ok[run] || !fs::exists(weights_path)) {
      t.error = "no converged weights for " + keys[run].id;
      return t;
    }
    const std::uint64_t seed = 10000 + i;
    const fs::path trial_dir = eval_dir / fmt::format("trial-{:04d}", i);
    try {
      const qmodel::QWeights w = qmodel::weights_from_json(read_file(weights_path));
      const Policy policy = qmodel::greedy_policy(w, policy_bounds(cfg, w.basis->m()));
      json rep;
      rep["trial"] = t.trial;
      rep["run"] = t.run_id;
      std::ostringstream csv;
      if (cfg.environment.is_glucose()) {
        const auto res = harness::run_trial(
            subject_params(cfg, keys[run].subject), policy,
            trial_config(cfg, cfg.trials.days, cfg.scenario.evaluation_profile, seed));
        harness::write_trial_csv(csv, res);
        rep["died"] = res.died;
        rep["death_message"] = res.death_message;
        rep["shifted_meals"] = res.shifted_meals;
        if (!res.died) {
          t.cgm_report = res.cgm_report;
          t.plasma_report = res.plasma_report;
          rep["cgm"] = report_json(res.cgm_report);
          rep["plasma"] = report_json(res.plasma_report);
          t.ok = true;
        } else {
          t.error = res.death_message;
        }
      } else {
        const LqtInstance inst = make_lqt_instance(cfg, keys[run].seed);
        const auto rows = lqt_rollout(inst.eval_env, inst.env.exosystem(), policy,
                                      cfg.environment.lqt.eval_steps, seed);
        write_lqt_csv(csv, rows);
        TrackingStats s;
        for (const auto& row : rows) {
          s.mean_error += row.error;
          s.max_error = std::max(s.max_error, row.error);
        }
        s.steps = static_cast<int>(rows.size());
        s.mean_error /= std::max(1, s.steps);
        t.tracking = s;
        rep["mean_tracking_error"] = s.mean_error;
        rep["max_tracking_error"] = s.max_error;
        t.ok = true;
      }
      write_file(trial_dir / "trace.csv", csv.str());
      write_file(trial_dir / "report.json", rep.dump(2) + "\n");
    } catch (const std::exception& e) {
      t.ok = false;
      t.error = e.what();
    }
    return t;
  });

  CommandResult result;
  json list = json::array();
  std::ostringstream csv;
  std::vector<metrics::GlycaemicReport> cgm;
  std::vector<metrics::GlycaemicReport> plasma;
  if (cfg.environment.is_glucose()) {
    metrics::write_report_csv_header(csv, "trial");
  } else {
    csv << "trial,mean_tracking_error,max_tracking_error\n";
  }
  double err_sum = 0.0;
  int err_count = 0;
  for (const auto& t : trials) {
    json j;
    j["trial"] = t.trial;
    j["run"] = t.run_id;
    j["ok"] = t.ok;
    j["error"] = t.error;
    if (t.cgm_report) {
      j["cgm"] = report_json(*t.cgm_report);
      j["plasma"] = report_json(*t.plasma_report);
      metrics::write_report_csv_row(csv, std::to_string(t.trial), *t.cgm_report);
      cgm.push_back(*t.cgm_report);
      plasma.push_back(*t.plasma_report);
    }
    if (t.tracking) {
      j["mean_tracking_error"] = t.tracking->mean_error;
      j["max_tracking_error"] = t.tracking->max_error;
      csv << fmt::format("{},{},{}\n", t.trial, t.tracking->mean_error, t.tracking->max_error);
      err_sum += t.tracking->mean_error;
      ++err_count;
    }
    list.push_back(j);
    if (!t.ok) {
      result.exit_code = 1;
      result.messages.push_back(fmt::format("trial {} ({}): {}", t.trial, t.run_id, t.error));
    }
  }
  json out;
  out["format"] = "rlpi.evaluate-summary/1";
  out["environment"] = cfg.environment.name;
  out["days"] = cfg.trials.days;
  out["trials"] = list;
  write_file(eval_dir / "summary.json", out.dump(2) + "\n");
  write_file(eval_dir / "reports.csv", csv.str());
  write_file(eval_dir / "plots.json", plot_manifest(cfg, trials).dump(2) + "\n");

  std::string table = fmt::format("Completed trials: {} of {}\n", cgm.size() + err_count, trials.size());
  if (!cgm.empty()) {
    table += "\n" + metrics::aggregate_markdown({{"CGM", metrics::cohort_aggregate(cgm)},
                                                 {"plasma", metrics::cohort_aggregate(plasma)}});
  }
  if (err_count > 0) table += fmt::format("Mean tracking error: {:.6g}\n", err_sum / err_count);
  write_file(eval_dir / "table.md", table);
  return result;
}

std::string cmd_report(const fs::path& dir) {
  const fs::path learn = dir / "learn" / "summary.json";
  const fs::path eval = dir / "evaluate" / "summary.json";
  if (!fs::exists(learn) && !fs::exists(eval)) {
    throw ConfigError(fmt::format("nothing to report under '{}'", dir.string()));
  }
  std::string md = fmt::format("# Experiment {}\n", dir.filename().string());
  if (fs::exists(learn)) {
    const json s = json::parse(read_file(learn));
    md += fmt::format("\n## Learning\n\nEnvironment `{}`, lambda rule `{}`.\n\n",
                      s.at("environment").get<std::string>(), s.at("lambda_rule").get<std::string>());
    md += "| run | status | iterations | rho | certified | oracle error |\n|---|---|---|---|---|---|\n";
    for (const auto& r : s.at("runs")) {
      const std::string oracle = r.at("oracle_error").is_null()
                                     ? "" : fmt::format("{:.3e}", r.at("oracle_error").get<double>());
      md += fmt::format("| {} | {} | {} | {} | {} | {} |\n", r.at("id").get<std::string>(),
                        r.at("ok").get<bool>() ? "converged" : "failed", r.at("iterations").get<int>(),
                        r.at("final_rho").get<int>(), r.at("certified").get<bool>() ? "yes" : "no", oracle);
    }
    for (const auto& r : s.at("runs")) {
      const std::string err = r.at("error");
      if (!err.empty()) md += fmt::format("\n- `{}`: {}", r.at("id").get<std::string>(), err);
    }
    md += "\n\n" + read_file(dir / "learn" / "table.md");
  }
  if (fs::exists(eval)) {
    md += "\n## Evaluation\n\n" + read_file(dir / "evaluate" / "table.md");
    const json s = json::parse(read_file(eval));
    std::vector<metrics::GlycaemicReport> reports;
    for (const auto& t : s.at("trials")) {
      if (t.contains("cgm")) reports.push_back(report_from_json(t.at("cgm")));
    }
    if (!reports.empty()) {
      md += "\n| trial | TIR % | % <50 | LBGI | HBGI |\n|---|---|---|---|---|\n";
      std::size_t k = 0;
      for (const auto& t : s.at("trials")) {
        if (!t.contains("cgm")) continue;
        const auto& r = reports[k++];
        md += fmt::format("| {} | {:.2f} | {:.2f} | {:.3f} | {:.3f} |\n", t.at("trial").get<int>(),
                          r.bands.normo, r.bands.severe_hypo, r.lbgi, r.hbgi);
      }
    }
  }
  write_file(dir / "report.md", md);
  return md;
}

}  // namespace rlpi::app
