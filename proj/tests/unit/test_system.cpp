#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "rlpi/envs.hpp"
#include "rlpi/system.hpp"

namespace rlpi {
namespace {

Environment lqt(const Mat& A, UncertaintySpec u = {}, StepMode mode = StepMode::kNominal) {
  return Environment(std::make_shared<envs::LinearDynamics>(A, Mat::Identity(2, 2)), std::move(u),
                     mode);
}

TEST(EnvStep, ZeroStateAndActionStayAtOrigin) {
  const Environment env = lqt(Mat::Identity(2, 2));
  EXPECT_EQ(env_step(env, Vec::Zero(2), Vec::Zero(2)), Vec::Zero(2));
}

TEST(EnvStep, NominalMatrixMultiply) {
  Mat A(2, 2);
  A << 0.9, 0.0, 0.0, 0.8;
  const Vec next = env_step(lqt(A), Vec::Ones(2), Vec::Zero(2));
  EXPECT_DOUBLE_EQ(next[0], 0.9);
  EXPECT_DOUBLE_EQ(next[1], 0.8);
}

TEST(EnvStep, UncertainModeAddsDisturbance) {
  Mat A(2, 2);
  A << 0.9, 0.0, 0.0, 0.8;
  UncertaintySpec u("lin", [](const Vec& x) { return 0.05 * x.norm(); },
                    [](const Vec& x) -> Vec { return 0.05 * x; });
  Vec x(2);
  x << 1.0, 0.0;
  const Vec next = env_step(lqt(A, u, StepMode::kUncertain), x, Vec::Zero(2));
  EXPECT_NEAR(next[0], 0.95, 1e-15);
  EXPECT_EQ(next[1], 0.0);
  // Same spec in nominal mode ignores d.
  EXPECT_DOUBLE_EQ(env_step(lqt(A, u), x, Vec::Zero(2))[0], 0.9);
}

TEST(EnvStep, NominalIsBitwiseDeterministic) {
  Mat A(2, 2);
  A << 0.31, -1.7, 0.2, 0.99;
  const Environment env = lqt(A);
  Vec x(2);
  x << 0.123456789, -3.3;
  Vec a(2);
  a << 1e-3, 2.5;
  const Vec first = env_step(env, x, a);
  for (int k = 0; k < 100; ++k) ASSERT_EQ(env_step(env, x, a), first);
}

TEST(EnvStep, DivergenceGuard) {
  const Environment env = lqt(Mat::Identity(2, 2) * 1e6);
  Vec x = Vec::Constant(2, 1e5);
  EXPECT_THROW(env_step(env, x, Vec::Zero(2)), DivergenceError);
  x[0] = std::nan("");
  EXPECT_THROW(env_step(lqt(Mat::Identity(2, 2)), x, Vec::Zero(2)), DivergenceError);
}

TEST(ReferenceStep, ConstantExosystem) {
  const Vec r = Vec::Constant(1, 120.0);
  EXPECT_EQ(reference_step(Exosystem::constant(1), r), r);
}

TEST(ReferenceStep, LinearHalving) {
  const Exosystem exo = Exosystem::linear(Mat::Constant(1, 1, 0.5));
  EXPECT_DOUBLE_EQ(reference_step(exo, Vec::Constant(1, 2.0))[0], 1.0);
  EXPECT_EQ(reference_step(exo, Vec::Zero(1)), Vec::Zero(1));
  EXPECT_EQ(reference_step(Exosystem::constant(3), Vec::Zero(3)), Vec::Zero(3));
}

TEST(UncertaintyBound, HarnessQuadraticBound) {
  const UncertaintySpec spec = UncertaintySpec::quadratic(90.0);
  EXPECT_EQ(uncertainty_bound(spec, Vec::Zero(2)), 0.0);
  Vec x(2);
  x << 1.0, 0.0;
  EXPECT_NEAR(uncertainty_bound(spec, x), 9.486832980505138, 1e-12);
  x << 3.0, 4.0;
  EXPECT_NEAR(uncertainty_bound(spec, x), 47.43416490252569, 1e-12);
}

TEST(UncertaintyBound, NegativeOrNanIsConfigError) {
  UncertaintySpec neg("neg", [](const Vec&) { return -1.0; });
  EXPECT_THROW(uncertainty_bound(neg, Vec::Ones(2)), ConfigError);
  UncertaintySpec nan("nan", [](const Vec&) { return std::nan(""); });
  EXPECT_THROW(uncertainty_bound(nan, Vec::Ones(2)), ConfigError);
}

TEST(UncertaintyBound, AlignedRealizationRespectsBoundOnSamples) {
  const UncertaintySpec spec = UncertaintySpec::quadratic(0.09).with_aligned_realization(0.9);
  EXPECT_LE(max_bound_violation(spec, 2, 10.0, 10000, 5), 1e-12);
  const UncertaintySpec too_big = UncertaintySpec::quadratic(0.09).with_aligned_realization(2.0);
  EXPECT_GT(max_bound_violation(too_big, 2, 10.0, 10000, 5), 0.0);
}

Policy constant_policy(double v) {
  return [v](const Vec&, const Vec&) { return Vec::Constant(1, v); };
}

TEST(ExplorationAction, FirstIterationAddsNoise) {
  CounterRng rng(3);
  const ExplorationNoise fixed{4e-4, 4e-4};
  const Vec a = exploration_action(0, constant_policy(0.01), nullptr, Vec::Zero(2), Vec::Zero(1),
                                   rng, fixed, ActionBounds::box(1, 0.0, 5.0));
  EXPECT_NEAR(a[0], 0.0104, 1e-15);
}

TEST(ExplorationAction, LaterIterationsAveragePolicies) {
  CounterRng rng(3);
  const ExplorationNoise fixed{3e-4, 3e-4};
  const Policy prev = constant_policy(0.01);
  const Vec a = exploration_action(2, constant_policy(0.02), &prev, Vec::Zero(2), Vec::Zero(1),
                                   rng, fixed, ActionBounds::box(1, 0.0, 5.0));
  EXPECT_NEAR(a[0], 0.0153, 1e-15);
  EXPECT_THROW(exploration_action(1, constant_policy(0.02), nullptr, Vec::Zero(2), Vec::Zero(1),
                                  rng, fixed, ActionBounds::box(1, 0.0, 5.0)),
               PreconditionError);
}

TEST(ExplorationAction, ClampedToBounds) {
  CounterRng rng(3);
  const Vec a = exploration_action(0, constant_policy(7.0), nullptr, Vec::Zero(2), Vec::Zero(1),
                                   rng, {}, ActionBounds::box(1, 0.0, 5.0));
  EXPECT_EQ(a[0], 5.0);
}

TEST(ExplorationAction, NoiseStaysInRangeWithCentredMean) {
  CounterRng rng(17);
  const ExplorationNoise noise;
  const ActionBounds wide = ActionBounds::box(1, -1.0, 1.0);
  double sum = 0.0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    const double n = exploration_action(0, constant_policy(0.0), nullptr, Vec::Zero(1),
                                        Vec::Zero(1), rng, noise, wide)[0];
    ASSERT_GE(n, 3e-4);
    ASSERT_LE(n, 6e-4);
    sum += n;
  }
  EXPECT_NEAR(sum / draws, 4.5e-4, 0.02 * 4.5e-4);
}

SimulatedPlant make_plant(std::size_t episode, std::uint64_t seed = 1) {
  Mat A(2, 2);
  A << 0.9, 0.2, 0.0, 0.7;
  return SimulatedPlant(lqt(A), Exosystem::linear(Mat::Identity(2, 2) * 0.9), {1.0, 1.0}, episode,
                        seed);
}

TEST(CollectBuffer, ExactSizeAndGreedyActionAtSuccessor) {
  SimulatedPlant plant = make_plant(10);
  CounterRng rng(9);
  const Policy greedy = [](const Vec& x, const Vec& r) -> Vec { return -0.5 * x + 0.1 * r; };
  const ActionSource source = [&](const Vec& x, const Vec& r) -> Vec {
    Vec a = greedy(x, r);
    for (Eigen::Index k = 0; k < a.size(); ++k) a[k] += rng.uniform(-1.0, 1.0);
    return a;
  };
  const TransitionBuffer buf = collect_buffer(plant, source, greedy, 28, 28, 4);
  ASSERT_EQ(buf.size(), 28u);
  EXPECT_EQ(buf.iteration, 4);
  for (const auto& t : buf.entries) EXPECT_EQ(t.a_next_policy, greedy(t.x_next, t.r_next));
}

TEST(CollectBuffer, TransitionsNeverStraddleResets) {
  SimulatedPlant plant = make_plant(5);
  const Policy zero = [](const Vec& x, const Vec&) -> Vec { return Vec::Zero(x.size()); };
  Mat A(2, 2);
  A << 0.9, 0.2, 0.0, 0.7;
  const TransitionBuffer buf = collect_buffer(plant, zero, zero, 23, 1);
  for (const auto& t : buf.entries) EXPECT_TRUE(t.x_next.isApprox(A * t.x, 1e-15));
}

TEST(CollectBuffer, BufferSmallerThanFeatureCountIsRejected) {
  SimulatedPlant plant = make_plant(5);
  const Policy zero = [](const Vec& x, const Vec&) -> Vec { return Vec::Zero(x.size()); };
  EXPECT_THROW(collect_buffer(plant, zero, zero, 10, 28), PreconditionError);
}

TEST(CollectBuffer, DivergentRolloutReportsPartialBuffer) {
  SimulatedPlant plant(lqt(Mat::Identity(2, 2) * 1e4), Exosystem::constant(2), {1.0, 1.0}, 1000, 2);
  const Policy zero = [](const Vec& x, const Vec&) -> Vec { return Vec::Zero(x.size()); };
  try {
    collect_buffer(plant, zero, zero, 100, 1);
    FAIL() << "expected divergence";
  } catch (const PartialBufferError& e) {
    // |x| grows by 1e4 per step from the unit box, so the guard trips within three steps.
    EXPECT_GE(e.collected(), 1u);
    EXPECT_LE(e.collected(), 3u);
  }
}

TEST(CollectBuffer, CsvHasDocumentedHeader) {
  SimulatedPlant plant = make_plant(5);
  const Policy zero = [](const Vec& x, const Vec&) -> Vec { return Vec::Zero(x.size()); };
  const TransitionBuffer buf = collect_buffer(plant, zero, zero, 3, 1);
  std::ostringstream os;
  write_buffer_csv(os, buf);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x1,x2,r1,r2,a1,a2,x1',x2',r1',r2',apol1,apol2");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(CounterRng, SameKeySameStream) {
  CounterRng a(42, 7);
  CounterRng b(42, 7);
  CounterRng c(42, 8);
  bool differs = false;
  for (int k = 0; k < 1000; ++k) {
    const auto va = a.next_u64();
    ASSERT_EQ(va, b.next_u64());
    differs = differs || va != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

}  // namespace
}  // namespace rlpi
