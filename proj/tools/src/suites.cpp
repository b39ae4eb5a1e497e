#include "rlpi_app/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>

#include <fmt/format.h>

#include "rlpi/envs.hpp"
#include "rlpi/lambda_pi.hpp"

namespace rlpi::app {

using exact_dp::ReferenceGrid;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::optional<Mat> initial_table(const ReferenceGrid& g) {
  return exact_dp::scaled_initial_table(g.mdp, g.base, g.c_start);
}

double max_increase(const std::vector<exact_dp::QTable>& seq) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < seq.size(); ++i) {
    worst = std::max(worst, (seq[i].q - seq[i - 1].q).maxCoeff());
  }
  return worst;
}

}  // namespace

std::vector<ReferenceGrid> toy_grids() {
  std::vector<ReferenceGrid> out;
  for (double gamma : {0.5, 0.9, 0.99}) {
    ReferenceGrid g;
    g.name = fmt::format("toy-{}", gamma);
    g.mdp = exact_dp::two_state_toy(gamma);
    g.base = Mat::Ones(2, 2);
    g.c_start = 1.0;
    out.push_back(std::move(g));
  }
  return out;
}

CheckResult lemma1_suite(const std::vector<ReferenceGrid>& grids,
                         const std::vector<double>& lambdas, int J, double slack) {
  Stopwatch clock;
  CheckResult res{"lemma1", true, "", 0.0};
  double worst_monotone = -std::numeric_limits<double>::infinity();
  double worst_bound = -std::numeric_limits<double>::infinity();
  for (const ReferenceGrid& g : grids) {
    const auto q0 = initial_table(g);
    if (!q0) {
      res.passed = false;
      res.detail += fmt::format("{}: no admissible Q0; ", g.name);
      continue;
    }
    for (double lambda : lambdas) {
      const auto seq = exact_dp::inner_iterate(g.mdp, exact_dp::make_inner_sequence(g.mdp, *q0, lambda), J);
      if (!seq.precondition_ok) {
        res.passed = false;
        res.detail += fmt::format("{} lambda={}: precondition fails; ", g.name, lambda);
        continue;
      }
      const double lg = lambda * g.mdp.gamma;
      const double d01 = (seq.xi[0] - seq.xi[1]).cwiseAbs().maxCoeff();
      for (std::size_t j = 0; j < seq.xi.size(); ++j) {
        if (j > 0) worst_monotone = std::max(worst_monotone, (seq.xi[j] - seq.xi[j - 1]).maxCoeff());
        const double bound = std::pow(lg, static_cast<double>(j)) / (1.0 - lg) * d01;
        worst_bound = std::max(worst_bound, (seq.xi[j] - seq.limit).cwiseAbs().maxCoeff() - bound);
      }
    }
  }
  if (worst_monotone > slack || worst_bound > slack) res.passed = false;
  res.detail += fmt::format("{} grids x {} lambdas, J={}: max increase {:.3e}, max bound excess {:.3e}",
                            grids.size(), lambdas.size(), J, worst_monotone, worst_bound);
  res.seconds = clock.seconds();
  return res;
}

CheckResult theorem2_suite(const std::vector<ReferenceGrid>& grids, double slack, double fp_tol,
                           std::size_t min_grids) {
  Stopwatch clock;
  CheckResult res{"theorem2", true, "", 0.0};
  std::size_t qualified = 0;
  for (const ReferenceGrid& g : grids) {
    const auto q0 = initial_table(g);
    if (!q0) {
      res.detail += fmt::format("{}: no admissible Q0; ", g.name);
      continue;
    }
    const auto lpi = exact_dp::exact_lambda_pi(g.mdp, LambdaSchedule::tanh_log(), 1e-10, *q0);
    const std::size_t c14_ok = static_cast<std::size_t>(
        std::count(lpi.condition14.begin(), lpi.condition14.end(), true));
    if (!lpi.condition13 || c14_ok != lpi.condition14.size()) {
      res.detail += fmt::format("{}: hypotheses fail (Eq.13 {}, Eq.14 {}/{}), excluded; ", g.name,
                                lpi.condition13, c14_ok, lpi.condition14.size());
      continue;
    }
    ++qualified;
    const auto vi = exact_dp::exact_lambda_pi(g.mdp, LambdaSchedule::constant(0.0), 1e-10, *q0);
    const double inc = max_increase(lpi.sequence);
    const double gap = (lpi.sequence.back().q - vi.sequence.back().q).cwiseAbs().maxCoeff();
    const bool ok = lpi.converged && inc <= slack && gap <= fp_tol;
    res.passed = res.passed && ok;
    res.detail += fmt::format("{}: {} iters (VI {}), max increase {:.2e}, |Q-Q_VI| {:.2e}; ", g.name,
                              lpi.iterations, vi.iterations, inc, gap);
  }
  if (qualified < min_grids) res.passed = false;
  res.detail += fmt::format("{} of {} grids meet the hypotheses", qualified, grids.size());
  res.seconds = clock.seconds();
  return res;
}

CheckResult corollary1_suite(const std::vector<ReferenceGrid>& grids,
                             const std::vector<double>& lambdas, double slack) {
  Stopwatch clock;
  CheckResult res{"corollary1", true, "", 0.0};
  double worst = -std::numeric_limits<double>::infinity();
  int pairs = 0;
  for (const ReferenceGrid& g : grids) {
    const auto q0 = initial_table(g);
    if (!q0) {
      res.passed = false;
      res.detail += fmt::format("{}: no admissible Q0; ", g.name);
      continue;
    }
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      for (std::size_t j = i + 1; j < lambdas.size(); ++j) {
        const auto r = exact_dp::corollary1_compare(g.mdp, *q0, lambdas[i], lambdas[j], slack);
        res.passed = res.passed && r.holds;
        worst = std::max(worst, r.max_violation);
        ++pairs;
      }
    }
  }
  res.detail += fmt::format("{} pairs on {} grids, max(Q_l2 - Q_l1) {:.3e}", pairs, grids.size(), worst);
  res.seconds = clock.seconds();
  return res;
}

CheckResult riccati_suite(double rel_tol) {
  Stopwatch clock;
  CheckResult res{"riccati", false, "", 0.0};
  const envs::LQTEnv env = envs::LQTEnv::validation();
  auto basis = std::make_shared<const qmodel::BasisDescriptor>(
      qmodel::BasisDescriptor::linear(env.n(), env.n_r(), env.m()));
  RlpiSetup setup;
  setup.problem.cost = env.cost();
  setup.problem.bounds = ActionBounds::box(env.m(), -1e6, 1e6);
  setup.problem.gamma_enabled = false;
  setup.basis = basis;
  setup.make_learn_plant = [env]() -> std::unique_ptr<Plant> {
    return std::make_unique<SimulatedPlant>(env.environment(), env.exosystem(),
                                            SimulatedPlant::InitialBox{1.0, 1.0}, 8, 3);
  };
  RlpiConfig c;
  c.buffer_size = 40;
  c.max_iters = 3000;
  c.noise = {-1.0, 1.0};
  c.reset_each_iteration = true;
  c.robustness = false;
  try {
    const RlpiResult out = run_rlpi(setup, c);
    const auto oracle = envs::lqt_riccati_oracle(env, basis);
    const double rel = (out.w.w - oracle.w.w).lpNorm<Eigen::Infinity>() /
                       oracle.w.w.lpNorm<Eigen::Infinity>();
    res.passed = rel <= rel_tol;
    res.detail = fmt::format("{} iterations, relative error {:.3e}", out.trace.iterations, rel);
  } catch (const Error& e) {
    res.detail = e.what();
  }
  res.seconds = clock.seconds();
  return res;
}

std::vector<CheckResult> verify_suites(const std::string& level) {
  if (level != "quick" && level != "full") throw ConfigError("verify level must be quick or full");
  const bool full = level == "full";
  const std::vector<ReferenceGrid> grids = full ? exact_dp::reference_grids() : toy_grids();
  std::vector<CheckResult> out;
  out.push_back(lemma1_suite(grids, {0.1, 0.5, 0.9}));
  out.push_back(theorem2_suite(grids, 1e-12, 1e-8, full ? 2 : grids.size()));
  out.push_back(corollary1_suite(grids, {0.0, 0.25, 0.5, 0.75, 0.9}));
  out.push_back(riccati_suite());
  return out;
}

}  // namespace rlpi::app
