#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "rlpi/envs.hpp"
#include "rlpi/lambda_pi.hpp"

namespace rlpi {
namespace {

using qmodel::BasisDescriptor;
using qmodel::QWeights;

TEST(StageCost, HandValue) {
  Mat C(1, 2);
  C << 1.0, 0.0;
  const CostSpec cost = CostSpec::make(Mat::Identity(1, 1), Mat::Constant(1, 1, 300.0), 0.95, C);
  Vec x(2);
  x << 130.0, -7.0;
  EXPECT_NEAR(stage_cost(cost, x, Vec::Constant(1, 120.0), Vec::Constant(1, 0.1)), 103.0, 1e-12);
}

TEST(StageCost, ValidateRejectsBadMatrices) {
  const CostSpec ok = CostSpec::make(Mat::Identity(2, 2), Mat::Constant(1, 1, 0.1), 0.95);
  EXPECT_NO_THROW(ok.validate(2, 2, 1));
  EXPECT_THROW(ok.validate(3, 2, 1), ConfigError);
  EXPECT_THROW(CostSpec::make(-Mat::Identity(2, 2), Mat::Identity(1, 1), 0.9).validate(2, 2, 1),
               ConfigError);
  Mat skew(2, 2);
  skew << 1, 0.5, 0, 1;
  EXPECT_THROW(CostSpec::make(skew, Mat::Identity(1, 1), 0.9).validate(2, 2, 1), ConfigError);
  EXPECT_THROW(CostSpec::make(Mat::Identity(2, 2), Mat::Identity(1, 1), 1.5).validate(2, 2, 1),
               ConfigError);
}

TEST(Gamma, HandValue) {
  Vec g(2);
  g << 2.0, 0.0;
  EXPECT_NEAR(gamma_value(1.0, 3.0, 0.95, g), 9.95, 1e-14);
  EXPECT_EQ(gamma_value(1.0, 0.0, 0.95, Vec::Zero(2)), 0.0);
}

TEST(Gamma, DisabledModeIsZero) {
  Problem p;
  p.cost = CostSpec::make(Mat::Identity(1, 1), Mat::Identity(1, 1), 0.9);
  p.uncertainty = UncertaintySpec::quadratic(4.0);
  p.bounds = ActionBounds::box(1, -1, 1);
  p.gamma_enabled = false;
  const auto b = std::make_shared<const BasisDescriptor>(BasisDescriptor::linear(1, 1, 1));
  const QWeights w = qmodel::init_q0(b, {});
  EXPECT_EQ(gamma_term(w, 3.0, p, Vec::Ones(1), Vec::Ones(1), Vec::Ones(1)), 0.0);
  p.gamma_enabled = true;
  // Q⁰ = x² + r² + 1e5 a²: ∇ₓ = 2x' = 2 at a = 0, Δ² = 4.
  EXPECT_NEAR(gamma_term(w, 3.0, p, Vec::Ones(1), Vec::Ones(1), Vec::Ones(1)),
              9.0 * 4.0 + 0.25 * 0.9 * 4.0, 1e-12);
}

TEST(Lambda, TanhScheduleValues) {
  const LambdaSchedule s = LambdaSchedule::tanh_log();
  EXPECT_EQ(lambda_value(s, 0), 0.0);
  EXPECT_NEAR(lambda_value(s, 1), 0.4504008506480096, 1e-15);
  double prev = 0.0;
  for (int i = 1; i < 5000; ++i) {
    const double l = lambda_value(s, i);
    ASSERT_GE(l, prev);
    ASSERT_LT(l, 1.0);
    prev = l;
  }
  EXPECT_EQ(lambda_value(s, 1000000), s.cap);
}

TEST(Lambda, ParseAndDescribe) {
  EXPECT_EQ(LambdaSchedule::parse("vi").describe(), "const:0");
  EXPECT_EQ(LambdaSchedule::parse("tanh:0.7").describe(), "tanh:0.7");
  EXPECT_EQ(lambda_value(LambdaSchedule::parse("const:0.5"), 7), 0.5);
  EXPECT_THROW(LambdaSchedule::parse("const:1"), ConfigError);
  EXPECT_THROW(LambdaSchedule::parse("tanh:-1"), ConfigError);
  EXPECT_THROW(LambdaSchedule::parse("cosh:1"), ConfigError);
  EXPECT_THROW(LambdaSchedule::parse("tanh:0.7x"), ConfigError);
}

TEST(LeastSquares, HandInstance) {
  Mat psi(3, 2);
  psi << 1, 0, 0, 2, 1, 1;
  Vec z(3);
  z << 1, 2, 2;
  LsDiagnostics d;
  const Vec w = solve_least_squares(psi, z, 1e10, &d);
  EXPECT_NEAR(w[0], 1.0, 1e-14);
  EXPECT_NEAR(w[1], 1.0, 1e-14);
  EXPECT_LT(d.normal_residual, 1e-13);
}

TEST(LeastSquares, MatchesNormalEquationsOnRandomProblem) {
  CounterRng rng(12);
  Mat psi(50, 6);
  Vec z(50);
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    for (Eigen::Index j = 0; j < psi.cols(); ++j) psi(i, j) = rng.normal() * std::pow(10.0, j);
    z[i] = rng.normal();
  }
  const Vec w = solve_least_squares(psi, z);
  const Vec ref = (psi.transpose() * psi).ldlt().solve(psi.transpose() * z);
  EXPECT_LT((w - ref).cwiseQuotient(ref.cwiseAbs()).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(LeastSquares, RankDeficiencyIsReported) {
  Mat psi(4, 2);
  psi << 1, 2, 2, 4, 3, 6, 4, 8;
  EXPECT_THROW(solve_least_squares(psi, Vec::Ones(4)), RankDeficientError);
  Mat zero_col = Mat::Zero(4, 2);
  zero_col.col(0).setOnes();
  EXPECT_THROW(solve_least_squares(zero_col, Vec::Ones(4)), RankDeficientError);
  EXPECT_THROW(solve_least_squares(Mat::Ones(1, 2), Vec::Ones(1)), RankDeficientError);
}

TEST(SpectralNorm, MatchesSvd) {
  CounterRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Mat m(3, 3);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
    const Mat sym = m + m.transpose();
    const double ref = Eigen::JacobiSVD<Mat>(sym).singularValues()[0];
    EXPECT_NEAR(spectral_norm(sym), ref, 1e-6 * ref);
  }
  EXPECT_EQ(spectral_norm(Mat::Zero(2, 2)), 0.0);
}

TEST(Condition10, HandValues) {
  // ρ² must reach γ(1 + ‖H‖/2): 0.9975 for ‖H‖ = 0.1 and 1.9 for ‖H‖ = 2.
  EXPECT_TRUE(condition10_holds(1.0, 0.95, 0.1, 1.0));
  EXPECT_FALSE(condition10_holds(1.0, 0.95, 2.0, 1.0));
  EXPECT_TRUE(condition10_holds(std::sqrt(1.9) + 1e-12, 0.95, 2.0, 1.0));
  EXPECT_FALSE(condition10_holds(std::sqrt(0.9975) - 1e-9, 0.95, 0.1, 1.0));
  EXPECT_TRUE(condition10_holds(1.0, 0.95, 1e6, 0.0));
}

struct LqtFixture {
  envs::LQTEnv env = envs::LQTEnv::validation();
  std::shared_ptr<const BasisDescriptor> basis =
      std::make_shared<const BasisDescriptor>(BasisDescriptor::linear(2, 2, 1));

  RlpiSetup setup() const {
    RlpiSetup s;
    s.problem.cost = env.cost();
    s.problem.bounds = ActionBounds::box(1, -1e6, 1e6);
    s.problem.gamma_enabled = false;
    s.basis = basis;
    const auto e = env;
    s.make_learn_plant = [e]() -> std::unique_ptr<Plant> {
      return std::make_unique<SimulatedPlant>(e.environment(), e.exosystem(),
                                              SimulatedPlant::InitialBox{1.0, 1.0}, 8, 3);
    };
    return s;
  }

  RlpiConfig config(LambdaSchedule schedule) const {
    RlpiConfig c;
    c.schedule = schedule;
    c.buffer_size = 40;
    c.max_iters = 3000;
    c.noise = {-1.0, 1.0};
    c.reset_each_iteration = true;
    c.robustness = false;
    return c;
  }
};

TEST(RunRlpi, GammaDisabledConvergesToRiccatiOracle) {
  const LqtFixture f;
  const RlpiResult res = run_rlpi(f.setup(), f.config(LambdaSchedule::tanh_log()));
  const envs::RiccatiSolution oracle = envs::lqt_riccati_oracle(f.env, f.basis);
  const double rel = (res.w.w - oracle.w.w).lpNorm<Eigen::Infinity>() /
                     oracle.w.w.lpNorm<Eigen::Infinity>();
  EXPECT_LE(rel, 1e-6);
  EXPECT_FALSE(res.trace.certified);
  EXPECT_EQ(res.trace.attempts.size(), 1u);
  EXPECT_TRUE(res.trace.attempts[0].init_check_passed);
}

TEST(RunRlpi, LambdaScheduleNeedsFewerIterationsThanVi) {
  const LqtFixture f;
  const RlpiResult lpi = run_rlpi(f.setup(), f.config(LambdaSchedule::tanh_log()));
  const RlpiResult vi = run_rlpi(f.setup(), f.config(LambdaSchedule::constant(0.0)));
  EXPECT_LT(lpi.trace.iterations, vi.trace.iterations);
}

TEST(RunRlpi, SameSeedSameTrace) {
  const LqtFixture f;
  RlpiConfig c = f.config(LambdaSchedule::tanh_log());
  c.max_iters = 5;
  c.tau = 1e-300;
  auto run = [&] {
    try {
      run_rlpi(f.setup(), c);
    } catch (const LearningError& e) {
      std::ostringstream os;
      write_trace_jsonl(os, e.trace());
      return os.str();
    }
    return std::string();
  };
  const std::string a = run();
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, run());
}

TEST(RunRlpi, ConfigValidation) {
  const LqtFixture f;
  RlpiConfig c = f.config(LambdaSchedule::tanh_log());
  c.tau = 0.0;
  EXPECT_THROW(run_rlpi(f.setup(), c), ConfigError);
  c = f.config(LambdaSchedule::tanh_log());
  c.buffer_size = 10;  // fewer transitions than the 15 features
  EXPECT_THROW(run_rlpi(f.setup(), c), PreconditionError);
}

// Exactly determined consistent system: the fitted Q satisfies the λ-target on every sample.
TEST(PolicyEvaluate, FittedValuesReproduceTargets) {
  const LqtFixture f;
  const RlpiSetup s = f.setup();
  const QWeights w0 = qmodel::init_q0(f.basis, {});
  const Policy mu = qmodel::greedy_policy(w0, s.problem.bounds);
  // Random transitions in general position; K = 15 rows make the solve exact.
  CounterRng rng(2);
  auto draw = [&](int n) {
    Vec v(n);
    for (int k = 0; k < n; ++k) v[k] = rng.uniform(-1, 1);
    return v;
  };
  TransitionBuffer buf;
  for (int k = 0; k < 15; ++k) {
    Transition t{draw(2), draw(2), draw(1), draw(2), draw(2), Vec()};
    t.a_next_policy = mu(t.x_next, t.r_next);
    buf.entries.push_back(t);
  }
  const double lambda = 0.45;
  const QWeights w1 = policy_evaluate_ls(buf, w0, lambda, 1.0, s.problem);
  const double g = s.problem.cost.gamma;
  for (const auto& t : buf.entries) {
    const double lhs = qmodel::q_eval(w1, {t.x, t.r, t.a});
    const double rhs = stage_cost(s.problem.cost, t.x, t.r, t.a) +
                       lambda * g * qmodel::q_eval(w1, {t.x_next, t.r_next, t.a_next_policy}) +
                       (1 - lambda) * g * qmodel::q_eval(w0, {t.x_next, t.r_next, t.a_next_policy});
    EXPECT_NEAR(lhs, rhs, 1e-6 * (1.0 + std::abs(rhs)));
  }
}

TEST(TraceJsonl, EndsWithFinalRecord) {
  LearnTrace t;
  IterationRecord r;
  r.w = Vec::Ones(2);
  t.records.push_back(r);
  t.attempts.push_back(RhoAttempt{});
  std::ostringstream os;
  write_trace_jsonl(os, t);
  const std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
  EXPECT_NE(s.find("\"type\":\"final\""), std::string::npos);
}

}  // namespace
}  // namespace rlpi
