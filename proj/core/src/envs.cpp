#include "rlpi/envs.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <fmt/format.h>

namespace rlpi::envs {

LinearDynamics::LinearDynamics(Mat A, Mat B) : A_(std::move(A)), B_(std::move(B)) {
  if (A_.rows() != A_.cols() || A_.rows() == 0) throw ConfigError("A must be square");
  if (B_.rows() != A_.rows() || B_.cols() == 0) throw ConfigError("B must have n rows");
}

bool controllable(const Mat& A, const Mat& B) {
  const Eigen::Index n = A.rows();
  Mat ctrb(n, n * B.cols());
  Mat block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * B.cols(), B.cols()) = block;
    block = A * block;
  }
  Eigen::FullPivLU<Mat> lu(ctrb);
  lu.setThreshold(1e-10);
  return lu.rank() == n;
}

LQTEnv::LQTEnv(Mat A, Mat B, Mat H, CostSpec cost)
    : dyn_(std::make_shared<LinearDynamics>(std::move(A), std::move(B))),
      H_(std::move(H)),
      cost_(std::move(cost)) {
  if (H_.rows() != H_.cols()) throw ConfigError("H must be square");
  if (!controllable(dyn_->A(), dyn_->B())) throw ConfigError("(A, B) is not controllable");
  cost_.validate(n(), n_r(), m());
}

LQTEnv LQTEnv::validation() {
  Mat A(2, 2);
  A << 1.0, 0.1, 0.0, 0.9;
  Mat B(2, 1);
  B << 0.0, 0.5;
  return LQTEnv(A, B, 0.98 * Mat::Identity(2, 2),
                CostSpec::make(Mat::Identity(2, 2), Mat::Constant(1, 1, 0.1), 0.95));
}

LQTEnv LQTEnv::uncertain_benchmark() {
  Mat A(2, 2);
  A << 1.05, 0.1, 0.0, 0.95;
  return LQTEnv(A, Mat::Identity(2, 2), 0.8 * Mat::Identity(2, 2),
                CostSpec::make(Mat::Identity(2, 2), 0.2 * Mat::Identity(2, 2), 0.95));
}

Environment LQTEnv::environment(UncertaintySpec uncertainty, StepMode mode) const {
  return Environment(dyn_, std::move(uncertainty), mode);
}

qmodel::QWeights quadratic_form_weights(const Mat& M,
                                        std::shared_ptr<const qmodel::BasisDescriptor> basis) {
  const int nv = basis->variable_count();
  if (M.rows() != nv || M.cols() != nv) throw ConfigError("quadratic form size mismatch");
  Vec w = Vec::Zero(basis->K());
  for (int i = 0; i < nv; ++i) {
    for (int j = i; j < nv; ++j) {
      const double coef = i == j ? M(i, i) : M(i, j) + M(j, i);
      qmodel::Exponents e(nv, 0);
      e[i] += 1;
      e[j] += 1;
      const int k = basis->find_feature(e);
      if (k < 0) {
        if (coef != 0.0) {
          throw ConfigError(fmt::format("basis '{}' cannot represent the quadratic form",
                                        basis->z_spec()));
        }
        continue;
      }
      w[k] += coef;
    }
  }
  return qmodel::make_weights(std::move(basis), std::move(w));
}

RiccatiSolution lqt_riccati_oracle(const LQTEnv& env,
                                   std::shared_ptr<const qmodel::BasisDescriptor> basis,
                                   double tol, int max_iters) {
  const int n = env.n();
  const int nr = env.n_r();
  const int m = env.m();
  const int ns = n + nr;
  const CostSpec& c = env.cost();
  const double sg = std::sqrt(c.gamma);

  Mat F = Mat::Zero(ns, ns);
  F.topLeftCorner(n, n) = env.A();
  F.bottomRightCorner(nr, nr) = env.H();
  Mat G = Mat::Zero(ns, m);
  G.topRows(n) = env.B();
  Mat Ct(nr, ns);
  Ct << c.C, -Mat::Identity(nr, nr);
  const Mat Qs = Ct.transpose() * c.S * Ct;

  const Mat Fg = sg * F;
  const Mat Gg = sg * G;
  Mat P = Qs;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Mat gpg = c.R + Gg.transpose() * P * Gg;
    const Mat gpf = Gg.transpose() * P * Fg;
    Mat next = Qs + Fg.transpose() * P * Fg - gpf.transpose() * gpg.ldlt().solve(gpf);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      throw ConfigError("Riccati recursion diverged: system is not stabilizable");
    }
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tol * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
  }
  if (it >= max_iters) throw ConfigError("Riccati recursion did not converge");

  RiccatiSolution sol;
  sol.P = P;
  sol.iterations = it + 1;
  Mat FG(ns, ns + m);
  FG << F, G;
  Mat stage = Mat::Zero(ns + m, ns + m);
  stage.topLeftCorner(ns, ns) = Qs;
  stage.bottomRightCorner(m, m) = c.R;
  sol.M = stage + c.gamma * FG.transpose() * P * FG;
  sol.M = 0.5 * (sol.M + sol.M.transpose());
  const Mat Maa = sol.M.bottomRightCorner(m, m);
  sol.K = -Maa.ldlt().solve(sol.M.bottomLeftCorner(m, ns));
  const Mat closed = sg * (F + G * sol.K);
  sol.closed_loop_radius = closed.eigenvalues().cwiseAbs().maxCoeff();
  sol.w = quadratic_form_weights(sol.M, std::move(basis));
  return sol;
}

double nonlinear_toy_step(double x, double a) {
  return std::clamp(0.8 * std::sin(x) + 0.9 * a, -kToyLimit, kToyLimit);
}

Vec ToyDynamics::nominal(const Vec& x, const Vec& a) const {
  Vec out(1);
  out[0] = nonlinear_toy_step(x[0], a[0]);
  return out;
}

Environment make_uncertain(const Environment& env, const UncertaintySpec& spec,
                           std::size_t samples, double radius, std::uint64_t seed, double slack) {
  if (!spec.has_realization()) {
    throw ConfigError("make_uncertain: the uncertainty spec carries no realization d(x)");
  }
  const double excess = max_bound_violation(spec, env.state_dim(), radius, samples, seed);
  if (excess > slack) {
    throw ConfigError(fmt::format(
        "disturbance '{}' exceeds its bound by {:.3e} on sampled states", spec.name(), excess));
  }
  return env.with_uncertainty(spec).with_mode(StepMode::kUncertain);
}

}  // namespace rlpi::envs
