#include <memory>

#include <benchmark/benchmark.h>

#include "rlpi/envs.hpp"
#include "rlpi/exact_dp.hpp"
#include "rlpi/glucosim.hpp"
#include "rlpi/lambda_pi.hpp"
#include "rlpi/qmodel.hpp"
#include "rlpi/rng.hpp"

namespace {

using namespace rlpi;

std::shared_ptr<const qmodel::BasisDescriptor> paper_basis() {
  static const auto b = std::make_shared<const qmodel::BasisDescriptor>(qmodel::BasisDescriptor::glucose_paper());
  return b;
}

qmodel::QWeights random_weights(std::uint64_t seed) {
  CounterRng rng(seed);
  Vec w(paper_basis()->K());
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = rng.normal();
  return qmodel::make_weights(paper_basis(), w);
}

Vec draw(CounterRng& rng, int n, double lo, double hi) {
  Vec v(n);
  for (int k = 0; k < n; ++k) v[k] = rng.uniform(lo, hi);
  return v;
}

void BM_BasisEval(benchmark::State& state) {
  const qmodel::QWeights w = random_weights(1);
  const qmodel::StateRefAction p{Vec::Constant(2, 1.3), Vec::Constant(1, 0.7), Vec::Constant(1, 0.2)};
  for (auto _ : state) benchmark::DoNotOptimize(qmodel::q_eval(w, p));
}
BENCHMARK(BM_BasisEval);

void BM_GradHess(benchmark::State& state) {
  const qmodel::QWeights w = random_weights(2);
  const qmodel::StateRefAction p{Vec::Constant(2, 1.3), Vec::Constant(1, 0.7), Vec::Constant(1, 0.2)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(qmodel::q_grad_x(w, p));
    benchmark::DoNotOptimize(qmodel::q_hess_x(w, p));
  }
}
BENCHMARK(BM_GradHess);

// One least-squares policy-evaluation step, B transitions, K = 28.
void BM_PolicyEvaluateLs(benchmark::State& state) {
  const auto B = static_cast<int>(state.range(0));
  const qmodel::QWeights w0 = qmodel::init_q0(paper_basis(), {1.0, 1.0});
  Problem problem;
  problem.cost = CostSpec::make(Mat::Identity(1, 1), Mat::Constant(1, 1, 0.1), 0.95,
                                (Mat(1, 2) << 1.0, 0.0).finished());
  problem.uncertainty = UncertaintySpec::quadratic(0.1);
  problem.bounds = ActionBounds::box(1, -5.0, 5.0);
  const Policy mu = qmodel::greedy_policy(w0, problem.bounds);
  CounterRng rng(3);
  TransitionBuffer buf;
  for (int b = 0; b < B; ++b) {
    Transition t{draw(rng, 2, -1, 1), draw(rng, 1, -1, 1), draw(rng, 1, -1, 1),
                 draw(rng, 2, -1, 1), draw(rng, 1, -1, 1), Vec()};
    t.a_next_policy = mu(t.x_next, t.r_next);
    buf.entries.push_back(t);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(policy_evaluate_ls(buf, w0, 0.5, 1.0, problem, 1e16));
  }
}
BENCHMARK(BM_PolicyEvaluateLs)->Arg(144)->Arg(576);

void BM_PatientDay(benchmark::State& state) {
  const auto params = glucosim::make_cohort(glucosim::Cohort::kT1Adult, 1, 1)[0];
  for (auto _ : state) {
    glucosim::PatientState s = glucosim::steady_state_at(params, 120.0);
    for (int k = 0; k < glucosim::kTicksPerDay; ++k) {
      s = glucosim::patient_step(params, s, 0.05, k == 84 ? 10.0 : 0.0, glucosim::Intensity::kNone);
    }
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PatientDay);

void BM_ExactLambdaPi(benchmark::State& state) {
  const exact_dp::ReferenceGrid g = exact_dp::tracking_grid();
  const Mat q0 = *exact_dp::scaled_initial_table(g.mdp, g.base, g.c_start);
  const LambdaSchedule schedule =
      state.range(0) == 0 ? LambdaSchedule::constant(0.0) : LambdaSchedule::tanh_log();
  for (auto _ : state) benchmark::DoNotOptimize(exact_dp::exact_lambda_pi(g.mdp, schedule, 1e-10, q0));
}
BENCHMARK(BM_ExactLambdaPi)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RiccatiOracle(benchmark::State& state) {
  const envs::LQTEnv env = envs::LQTEnv::validation();
  const auto basis = std::make_shared<const qmodel::BasisDescriptor>(qmodel::BasisDescriptor::linear(2, 2, 1));
  for (auto _ : state) benchmark::DoNotOptimize(envs::lqt_riccati_oracle(env, basis));
}
BENCHMARK(BM_RiccatiOracle)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
