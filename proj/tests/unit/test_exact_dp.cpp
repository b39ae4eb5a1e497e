#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "rlpi/exact_dp.hpp"

namespace rlpi::exact_dp {
namespace {

Mat initial_table(const ReferenceGrid& g) {
  const auto q0 = scaled_initial_table(g.mdp, g.base, g.c_start);
  if (!q0) throw std::runtime_error("no admissible initial table for " + g.name);
  return *q0;
}

TEST(Axis, SymmetricAboutZero) {
  const Axis a{-1.0, 1.0, 21};
  for (int k = 0; k < 21; ++k) EXPECT_EQ(a.at(k), -a.at(20 - k)) << k;
  EXPECT_EQ(a.at(10), 0.0);
  EXPECT_EQ(a.project(0.049), 10);
  EXPECT_EQ(a.project(7.0), 20);
  EXPECT_EQ((Axis{0.3, 0.3, 1}).at(0), 0.3);
}

TEST(Policy, TiesGoToLowerIndex) {
  Mat q(3, 3);
  q << 1, 1, 1, 2, 1, 1, 3, 2, 1;
  EXPECT_EQ(exact_policy_improve(q), (PolicyTable{0, 1, 2}));
}

// Hand evaluation of μ ≡ 0 on the two-state toy (γ = .9, R = .5, Δ² = .1·x²).
TEST(TwoStateToy, PolicyEvaluationByHand) {
  const GridMDP mdp = two_state_toy();
  const Mat zero = Mat::Zero(2, 2);
  const PolicyTable mu = exact_policy_improve(zero);
  ASSERT_EQ(mu, (PolicyTable{0, 0}));
  const Mat q = lambda_evaluate(mdp, zero, mu, 1.0);
  EXPECT_NEAR(q(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(q(1, 0), 1.1, 1e-15);
  EXPECT_NEAR(q(0, 1), 0.5 + 0.9 * 1.1, 1e-15);
  EXPECT_NEAR(q(1, 1), 1.0 + 0.5 + 0.1 + 0.9 * 1.1, 1e-15);
}

TEST(TwoStateToy, LambdaZeroIsOneBackup) {
  const GridMDP mdp = two_state_toy();
  Mat q(2, 2);
  q << 3, 4, 6, 5;
  const Mat next = lambda_evaluate(mdp, q, exact_policy_improve(q), 0.0);
  // V = [3, 5].
  EXPECT_NEAR(next(0, 0), 0.9 * 3, 1e-14);
  EXPECT_NEAR(next(0, 1), 0.5 + 0.9 * 5, 1e-14);
  EXPECT_NEAR(next(1, 0), 1.1 + 0.9 * 3, 1e-14);
  EXPECT_NEAR(next(1, 1), 1.6 + 0.9 * 5, 1e-14);
}

TEST(TwoStateToy, ConvergesToOptimalCost) {
  const GridMDP mdp = two_state_toy();
  const ExactRun run = exact_lambda_pi(mdp, LambdaSchedule::tanh_log(), 1e-12, 20.0 * Mat::Ones(2, 2));
  ASSERT_TRUE(run.converged);
  const Mat& q = run.sequence.back().q;
  // Staying at 0 is free; from 1 the best move is to 0.
  EXPECT_NEAR(q(0, 0), 0.0, 1e-10);
  EXPECT_NEAR(q(1, 0), 1.1, 1e-10);
  EXPECT_EQ(run.policies.back(), (PolicyTable{0, 0}));
}

TEST(Grid, RejectsInconsistentTables) {
  GridMDP mdp = two_state_toy();
  mdp.successor(0, 1) = 7;
  EXPECT_THROW(mdp.validate(), ConfigError);
  mdp = two_state_toy();
  mdp.cost(1, 1) = -1.0;
  EXPECT_THROW(mdp.validate(), ConfigError);
}

TEST(Grid, ReferenceGridsAdmitInitialTable) {
  for (const ReferenceGrid& g : reference_grids()) {
    const Mat q0 = initial_table(g);
    EXPECT_LE(condition13_violation(q0, g.mdp), 0.0) << g.name;
    EXPECT_FALSE(check_condition13(0.5 * q0, g.mdp)) << g.name;
  }
}

// Ξʲ is non-increasing, bounded below by Q̲, and approaches it geometrically.
TEST(InnerSequence, MonotoneWithGeometricBound) {
  for (const ReferenceGrid& g : reference_grids()) {
    const Mat q0 = initial_table(g);
    for (double lambda : {0.0, 0.3, 0.45, 0.9, 0.99}) {
      const InnerSequence seq = inner_iterate(g.mdp, make_inner_sequence(g.mdp, q0, lambda), 100);
      ASSERT_TRUE(seq.precondition_ok);
      const double lg = lambda * g.mdp.gamma;
      const double d01 = (seq.xi[0] - seq.xi[1]).cwiseAbs().maxCoeff();
      for (std::size_t j = 0; j < seq.xi.size(); ++j) {
        if (j > 0) {
          ASSERT_LE((seq.xi[j] - seq.xi[j - 1]).maxCoeff(), 1e-10) << g.name << " j=" << j;
        }
        ASSERT_GE((seq.xi[j] - seq.limit).minCoeff(), -1e-10) << g.name << " j=" << j;
        const double bound = std::pow(lg, static_cast<double>(j)) / (1.0 - lg) * d01;
        ASSERT_LE((seq.xi[j] - seq.limit).cwiseAbs().maxCoeff(), bound + 1e-10)
            << g.name << " lambda=" << lambda << " j=" << j;
      }
    }
  }
}

TEST(InnerSequence, RejectsLambdaOne) {
  const ReferenceGrid g = regulator_grid();
  EXPECT_THROW(make_inner_sequence(g.mdp, g.base, 1.0), ConfigError);
}

TEST(Ordering, LargerLambdaGivesSmallerEvaluation) {
  const std::vector<double> lambdas{0.0, 0.1, 0.25, 0.45, 0.6, 0.8, 0.9, 0.99, 0.999};
  for (const ReferenceGrid& g : reference_grids()) {
    const Mat q0 = initial_table(g);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      for (std::size_t j = i + 1; j < lambdas.size(); ++j) {
        const OrderingResult r = corollary1_compare(g.mdp, q0, lambdas[i], lambdas[j]);
        EXPECT_TRUE(r.holds) << g.name << " " << lambdas[i] << " vs " << lambdas[j] << " "
                             << r.max_violation;
      }
    }
  }
  EXPECT_THROW(corollary1_compare(regulator_grid().mdp, regulator_grid().base, 0.5, 0.1),
               PreconditionError);
}

void expect_monotone(const ExactRun& run, const std::string& name) {
  for (std::size_t i = 1; i < run.sequence.size(); ++i) {
    EXPECT_LE((run.sequence[i].q - run.sequence[i - 1].q).maxCoeff(), 1e-12) << name << " i=" << i;
  }
}

TEST(ExactLambdaPi, RegulationGridsMeetHypothesesAndDecrease) {
  for (const ReferenceGrid& g : {regulator_grid(), oscillator_grid()}) {
    const Mat q0 = initial_table(g);
    const ExactRun run = exact_lambda_pi(g.mdp, LambdaSchedule::tanh_log(), 1e-10, q0);
    ASSERT_TRUE(run.converged);
    EXPECT_TRUE(run.condition13);
    for (std::size_t i = 0; i < run.condition14.size(); ++i) {
      EXPECT_TRUE(run.condition14[i]) << g.name << " iteration " << i + 1;
    }
    expect_monotone(run, g.name);
  }
}

// λ-PI, value iteration and a λ = 1 re-evaluation of the limit agree.
TEST(ExactLambdaPi, FixedPointMatchesValueIteration) {
  for (const ReferenceGrid& g : reference_grids()) {
    const Mat q0 = initial_table(g);
    const ExactRun lpi = exact_lambda_pi(g.mdp, LambdaSchedule::tanh_log(), 1e-10, q0);
    const ExactRun vi = exact_lambda_pi(g.mdp, LambdaSchedule::constant(0.0), 1e-10, q0);
    const Mat& a = lpi.sequence.back().q;
    const Mat& b = vi.sequence.back().q;
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-8) << g.name;
    const Mat direct = lambda_evaluate(g.mdp, a, exact_policy_improve(a), 1.0);
    EXPECT_LE((a - direct).cwiseAbs().maxCoeff(), 1e-8) << g.name;
    EXPECT_LE(lpi.iterations, vi.iterations) << g.name;
    expect_monotone(lpi, g.name);
    expect_monotone(vi, g.name);
  }
}

TEST(ExactLambdaPi, TrackingNeedsFewerIterationsThanValueIteration) {
  const ReferenceGrid g = tracking_grid();
  const Mat q0 = initial_table(g);
  const ExactRun lpi = exact_lambda_pi(g.mdp, LambdaSchedule::tanh_log(), 1e-10, q0);
  const ExactRun vi = exact_lambda_pi(g.mdp, LambdaSchedule::constant(0.0), 1e-10, q0);
  EXPECT_LT(2 * lpi.iterations, vi.iterations);
}

TEST(ExactLambdaPi, ThrowsWhenIterationBudgetRunsOut) {
  const ReferenceGrid g = tracking_grid();
  EXPECT_THROW(exact_lambda_pi(g.mdp, LambdaSchedule::constant(0.0), 1e-10, initial_table(g), 3),
               NonConvergenceError);
}

TEST(Csv, HeaderAndRowCount) {
  const GridMDP mdp = two_state_toy();
  std::ostringstream os;
  write_qtable_csv(os, mdp, Mat::Zero(2, 2));
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x1,r1,a1,value");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

}  // namespace
}  // namespace rlpi::exact_dp
