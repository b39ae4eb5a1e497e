#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "rlpi/envs.hpp"
#include "rlpi/rng.hpp"

namespace rlpi::envs {
namespace {

using qmodel::BasisDescriptor;

std::shared_ptr<const BasisDescriptor> linear_basis(int n, int n_r, int m) {
  return std::make_shared<const BasisDescriptor>(BasisDescriptor::linear(n, n_r, m));
}

LQTEnv scalar_env(double a, double b, double gamma) {
  // r ≡ 0 through H = 0, so P_xx is the scalar regulator solution.
  return LQTEnv(Mat::Constant(1, 1, a), Mat::Constant(1, 1, b), Mat::Zero(1, 1),
                CostSpec::make(Mat::Identity(1, 1), Mat::Identity(1, 1), gamma));
}

TEST(Riccati, ScalarFixedPoint) {
  const RiccatiSolution sol = lqt_riccati_oracle(scalar_env(0.5, 1.0, 1.0), linear_basis(1, 1, 1));
  // p² − 0.25p − 1 = 0.
  EXPECT_NEAR(sol.P(0, 0), 1.1327822185373186, 1e-10);
  EXPECT_NEAR(sol.P(0, 0), (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0, 1e-10);
}

TEST(Riccati, ZeroDynamicsGivesStageCost) {
  const RiccatiSolution sol = lqt_riccati_oracle(
      LQTEnv(Mat::Zero(1, 1), Mat::Constant(1, 1, 1.0), Mat::Zero(1, 1),
             CostSpec::make(Mat::Identity(1, 1), Mat::Identity(1, 1), 0.9)),
      linear_basis(1, 1, 1));
  EXPECT_NEAR(sol.P(0, 0), 1.0, 1e-12);
  // Q*(x, 0, a) = x² + a² + γ p a², so no x·a cross term.
  const auto b = linear_basis(1, 1, 1);
  EXPECT_NEAR(sol.w.w[b->find_feature({1, 0, 1})], 0.0, 1e-12);
}

TEST(Riccati, GainMatchesDirectFormula) {
  const LQTEnv env = LQTEnv::validation();
  const auto basis = linear_basis(2, 2, 1);
  const RiccatiSolution sol = lqt_riccati_oracle(env, basis);
  // Augmented F = blkdiag(A, H), G = [B; 0], penalty on [x; r] via [C −I]ᵀS[C −I].
  Mat F = Mat::Zero(4, 4);
  F.topLeftCorner(2, 2) = env.A();
  F.bottomRightCorner(2, 2) = env.H();
  Mat G = Mat::Zero(4, 1);
  G.topRows(2) = env.B();
  const double g = env.cost().gamma;
  const Mat K = -(env.cost().R + g * G.transpose() * sol.P * G).ldlt().solve(g * G.transpose() * sol.P * F);
  CounterRng rng(6);
  const Policy mu = qmodel::greedy_policy(sol.w, ActionBounds::box(1, -1e9, 1e9));
  for (int s = 0; s < 100; ++s) {
    Vec v(4);
    for (int k = 0; k < 4; ++k) v[k] = rng.uniform(-3, 3);
    const double expect = (K * v)(0, 0);
    EXPECT_NEAR(mu(v.head(2), v.tail(2))[0], expect, 1e-8 * (1.0 + std::abs(expect)));
  }
  EXPECT_LT(sol.closed_loop_radius, 1.0);
}

// Γ-disabled Bellman optimality on random transitions.
TEST(Riccati, ZeroBellmanResidual) {
  for (const LQTEnv& env : {LQTEnv::validation(), LQTEnv::uncertain_benchmark()}) {
    const auto basis = linear_basis(env.n(), env.n_r(), env.m());
    const RiccatiSolution sol = lqt_riccati_oracle(env, basis);
    Problem p;
    p.cost = env.cost();
    p.bounds = ActionBounds::box(env.m(), -1e9, 1e9);
    p.gamma_enabled = false;
    CounterRng rng(8);
    const Environment e = env.environment();
    for (int s = 0; s < 1000; ++s) {
      Transition t;
      t.x = Vec(env.n());
      t.r = Vec(env.n_r());
      t.a = Vec(env.m());
      for (auto* v : {&t.x, &t.r, &t.a}) {
        for (Eigen::Index k = 0; k < v->size(); ++k) (*v)[k] = rng.uniform(-2, 2);
      }
      t.x_next = env_step(e, t.x, t.a);
      t.r_next = env.H() * t.r;
      const double q = qmodel::q_eval(sol.w, {t.x, t.r, t.a});
      ASSERT_NEAR(bellman_residual(sol.w, t, 1.0, p), 0.0, 1e-8 * (1.0 + std::abs(q)));
    }
  }
}

TEST(Riccati, QuadraticFormRoundTrip) {
  const auto basis = linear_basis(2, 1, 1);
  CounterRng rng(13);
  Mat M(4, 4);
  for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = rng.normal();
  M = (M + M.transpose()).eval();
  const qmodel::QWeights w = quadratic_form_weights(M, basis);
  for (int s = 0; s < 50; ++s) {
    Vec v(4);
    for (int k = 0; k < 4; ++k) v[k] = rng.uniform(-1, 1);
    EXPECT_NEAR(qmodel::q_eval(w, {v.head(2), v.segment(2, 1), v.tail(1)}), v.dot(M * v), 1e-12);
  }
}

TEST(LQTEnv, RejectsUncontrollablePair) {
  Mat A = Mat::Identity(2, 2);
  Mat B(2, 1);
  B << 1.0, 0.0;
  EXPECT_FALSE(controllable(A, B));
  EXPECT_THROW(LQTEnv(A, B, Mat::Identity(2, 2),
                      CostSpec::make(Mat::Identity(2, 2), Mat::Identity(1, 1), 0.9)),
               ConfigError);
  EXPECT_TRUE(controllable(LQTEnv::validation().A(), LQTEnv::validation().B()));
}

TEST(Toy, StepValues) {
  EXPECT_EQ(nonlinear_toy_step(0.0, 0.0), 0.0);
  EXPECT_NEAR(nonlinear_toy_step(std::numbers::pi / 2, 0.0), 0.8, 1e-15);
  EXPECT_NEAR(nonlinear_toy_step(1.0, 1.0), 1.5731767878463172, 1e-15);
  EXPECT_EQ(nonlinear_toy_step(0.0, 100.0), kToyLimit);
  EXPECT_EQ(nonlinear_toy_step(0.0, -100.0), -kToyLimit);
}

TEST(MakeUncertain, AcceptsAlignedRejectsOversized) {
  const Environment nominal = LQTEnv::uncertain_benchmark().environment();
  const UncertaintySpec base = UncertaintySpec::quadratic(0.09);
  const Environment unc = make_uncertain(nominal, base.with_aligned_realization(0.9));
  EXPECT_EQ(unc.mode(), StepMode::kUncertain);
  EXPECT_THROW(make_uncertain(nominal, base.with_aligned_realization(2.0)), ConfigError);
  EXPECT_THROW(make_uncertain(nominal, base), ConfigError);
}

TEST(MakeUncertain, ZeroDisturbanceMatchesNominal) {
  const Environment nominal = LQTEnv::uncertain_benchmark().environment();
  const UncertaintySpec zero = UncertaintySpec::quadratic(0.09).with_realization(
      [](const Vec& x) -> Vec { return Vec::Zero(x.size()); }, "zero");
  const Environment unc = make_uncertain(nominal, zero);
  Vec x(2);
  x << 0.3, -0.2;
  Vec a(2);
  a << 0.1, 0.05;
  for (int k = 0; k < 20; ++k) {
    const Vec n = env_step(nominal, x, a);
    ASSERT_EQ(env_step(unc, x, a), n);
    x = n;
  }
}

}  // namespace
}  // namespace rlpi::envs
