#include "rlpi/exact_dp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <utility>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fmt/format.h>

namespace rlpi::exact_dp {

void GridMDP::validate() const {
  const int S = states();
  const int U = action_count();
  if (S == 0 || U == 0) throw ConfigError("grid MDP needs states and actions");
  if (static_cast<int>(r.size()) != S || successor.rows() != S || successor.cols() != U ||
      cost.rows() != S || cost.cols() != U || delta2.size() != S || stencil_lo.rows() != S ||
      stencil_hi.rows() != S || static_cast<int>(interior.size()) != S) {
    throw ConfigError("grid MDP tables disagree in size");
  }
  if (successor.minCoeff() < 0 || successor.maxCoeff() >= S) {
    throw ConfigError("grid MDP successor leaves the grid");
  }
  if (cost.minCoeff() < 0.0 || delta2.minCoeff() < 0.0) {
    throw ConfigError("grid MDP costs must be non-negative");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("grid MDP needs gamma in (0, 1)");
}

double Axis::at(int k) const {
  if (count == 1) return lo;
  // Blend form keeps the grid exactly symmetric when lo = -hi.
  const double n = static_cast<double>(count - 1);
  return (static_cast<double>(k) * hi + (n - static_cast<double>(k)) * lo) / n;
}

int Axis::project(double v) const {
  if (count == 1) return 0;
  const double t = (std::clamp(v, lo, hi) - lo) / (hi - lo) * (count - 1);
  return std::clamp(static_cast<int>(std::lround(t)), 0, count - 1);
}

GridMDP build_scalar_grid(const ScalarGridSpec& spec) {
  if (!spec.f || !spec.h) throw ConfigError("scalar grid needs f and h");
  const Axis& ax = spec.x_axis;
  const Axis& ar = spec.r_axis;
  const Axis& aa = spec.a_axis;
  if (ax.count < 1 || ar.count < 1 || aa.count < 1) throw ConfigError("empty grid axis");

  GridMDP mdp;
  mdp.n = 1;
  mdp.n_r = 1;
  mdp.gamma = spec.gamma;
  mdp.rho = spec.rho;
  mdp.gradient_term = spec.gradient_term;
  const int S = ax.count * ar.count;
  const int U = aa.count;
  auto index = [&](int ix, int ir) { return ix * ar.count + ir; };

  for (int u = 0; u < U; ++u) mdp.actions.push_back(Vec::Constant(1, aa.at(u)));
  mdp.x.resize(S);
  mdp.r.resize(S);
  mdp.successor.resize(S, U);
  mdp.cost.resize(S, U);
  mdp.delta2.resize(S);
  mdp.stencil_lo.resize(S, 1);
  mdp.stencil_hi.resize(S, 1);
  mdp.interior.assign(S, false);

  for (int ix = 0; ix < ax.count; ++ix) {
    for (int ir = 0; ir < ar.count; ++ir) {
      const int s = index(ix, ir);
      const double xv = ax.at(ix);
      const double rv = ar.at(ir);
      mdp.x[s] = Vec::Constant(1, xv);
      mdp.r[s] = Vec::Constant(1, rv);
      mdp.delta2[s] = spec.delta2_scale * xv * xv;
      mdp.stencil_lo(s, 0) = index(std::max(ix - 1, 0), ir);
      mdp.stencil_hi(s, 0) = index(std::min(ix + 1, ax.count - 1), ir);
      mdp.interior[s] = ix > 0 && ix < ax.count - 1;
      const int ir_next = ar.project(spec.h(rv));
      for (int u = 0; u < U; ++u) {
        const double av = aa.at(u);
        mdp.successor(s, u) = index(ax.project(spec.f(xv, av)), ir_next);
        mdp.cost(s, u) = spec.q * (xv - rv) * (xv - rv) + spec.R * av * av;
      }
    }
  }
  mdp.validate();
  return mdp;
}

GridMDP two_state_toy(double gamma, double R, double delta2) {
  GridMDP mdp;
  mdp.gamma = gamma;
  mdp.gradient_term = false;
  mdp.x = {Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)};
  mdp.r = {Vec::Zero(1), Vec::Zero(1)};
  mdp.actions = {Vec::Constant(1, 0.0), Vec::Constant(1, 1.0)};
  mdp.successor.resize(2, 2);
  mdp.successor << 0, 1, 0, 1;
  mdp.cost.resize(2, 2);
  mdp.cost << 0.0, R, 1.0, 1.0 + R;
  mdp.delta2.resize(2);
  mdp.delta2 << 0.0, delta2;
  mdp.stencil_lo.resize(2, 1);
  mdp.stencil_lo << 0, 1;
  mdp.stencil_hi = mdp.stencil_lo;
  mdp.interior = {true, true};
  mdp.validate();
  return mdp;
}

PolicyTable exact_policy_improve(const Mat& q) {
  PolicyTable mu(q.rows(), 0);
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    int best = 0;
    for (Eigen::Index u = 1; u < q.cols(); ++u) {
      if (q(s, u) < q(s, best)) best = static_cast<int>(u);
    }
    mu[s] = best;
  }
  return mu;
}

Vec gradient_norms(const GridMDP& mdp, const Mat& q, const PolicyTable& mu) {
  const int S = mdp.states();
  Vec g = Vec::Zero(S);
  for (int s = 0; s < S; ++s) {
    double sum = 0.0;
    for (int k = 0; k < mdp.n; ++k) {
      const int lo = mdp.stencil_lo(s, k);
      const int hi = mdp.stencil_hi(s, k);
      if (lo == hi) continue;
      const double d = (q(hi, mu[s]) - q(lo, mu[s])) / (mdp.x[hi][k] - mdp.x[lo][k]);
      sum += d * d;
    }
    g[s] = sum;
  }
  return g;
}

Mat gamma_table(const GridMDP& mdp, const Mat& q, const PolicyTable& mu) {
  const int S = mdp.states();
  const int U = mdp.action_count();
  const Vec g = mdp.gradient_term ? gradient_norms(mdp, q, mu) : Vec::Zero(S);
  Mat out(S, U);
  for (int s = 0; s < S; ++s) {
    for (int u = 0; u < U; ++u) {
      out(s, u) = mdp.rho * mdp.rho * mdp.delta2[s] + 0.25 * mdp.gamma * g[mdp.successor(s, u)];
    }
  }
  return out;
}

namespace {

Vec on_policy(const Mat& q, const PolicyTable& mu) {
  Vec v(q.rows());
  for (Eigen::Index s = 0; s < q.rows(); ++s) v[s] = q(s, mu[s]);
  return v;
}

}  // namespace

Mat lambda_evaluate(const GridMDP& mdp, const Mat& q, const PolicyTable& mu, double lambda) {
  const int S = mdp.states();
  const int U = mdp.action_count();
  const double g = mdp.gamma;
  const Mat gam = gamma_table(mdp, q, mu);
  const Vec qmu = on_policy(q, mu);

  // c(s, u) = l + Γ + (1 − λ)γQ(s', μ(s')); Q_λ(s, u) = c(s, u) + λγV(s') with
  // V = Q_λ(·, μ) solving (I − λγP_μ)V = c_μ.
  Mat c(S, U);
  for (int s = 0; s < S; ++s) {
    for (int u = 0; u < U; ++u) {
      c(s, u) = mdp.cost(s, u) + gam(s, u) + (1.0 - lambda) * g * qmu[mdp.successor(s, u)];
    }
  }
  const Vec cmu = on_policy(c, mu);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * S);
  for (int s = 0; s < S; ++s) {
    const int sn = mdp.successor(s, mu[s]);
    trip.emplace_back(s, s, 1.0);
    trip.emplace_back(s, sn, -lambda * g);
  }
  Eigen::SparseMatrix<double> A(S, S);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error("lambda_evaluate: singular evaluation system");
  const Vec v = lu.solve(cmu);

  Mat out(S, U);
  for (int s = 0; s < S; ++s) {
    for (int u = 0; u < U; ++u) out(s, u) = c(s, u) + lambda * g * v[mdp.successor(s, u)];
  }
  return out;
}

double condition13_violation(const Mat& q, const GridMDP& mdp) {
  const PolicyTable mu = exact_policy_improve(q);
  const Mat gam = gamma_table(mdp, q, mu);
  const Vec qmu = on_policy(q, mu);
  double worst = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < mdp.states(); ++s) {
    for (int u = 0; u < mdp.action_count(); ++u) {
      const double rhs = mdp.cost(s, u) + gam(s, u) + mdp.gamma * qmu[mdp.successor(s, u)];
      worst = std::max(worst, rhs - q(s, u));
    }
  }
  return worst;
}

bool check_condition13(const Mat& q, const GridMDP& mdp, double slack) {
  return condition13_violation(q, mdp) <= slack;
}

bool check_condition14(const GridMDP& mdp, const Mat& q_i, const Mat& q_prev,
                       const PolicyTable& mu_i, const PolicyTable& mu_prev, bool interior_only,
                       double slack) {
  const Vec gi = gradient_norms(mdp, q_i, mu_i);
  const Vec gp = gradient_norms(mdp, q_prev, mu_prev);
  for (int s = 0; s < mdp.states(); ++s) {
    if (interior_only && !mdp.interior[s]) continue;
    if (gi[s] > gp[s] + slack) return false;
  }
  return true;
}

InnerSequence make_inner_sequence(const GridMDP& mdp, const Mat& q, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError("inner sequence needs lambda in [0, 1)");
  InnerSequence seq;
  seq.lambda = lambda;
  seq.base = q;
  seq.policy = exact_policy_improve(q);
  seq.xi.push_back(q);
  seq.precondition_violation = condition13_violation(q, mdp);
  seq.precondition_ok = seq.precondition_violation <= 0.0;
  seq.limit = lambda_evaluate(mdp, q, seq.policy, lambda);
  return seq;
}

InnerSequence inner_iterate(const GridMDP& mdp, InnerSequence seq, int J) {
  if (seq.xi.empty()) throw PreconditionError("inner_iterate: sequence has no Ξ⁰");
  const int S = mdp.states();
  const int U = mdp.action_count();
  const double g = mdp.gamma;
  const Mat gam = gamma_table(mdp, seq.base, seq.policy);
  const Vec qmu = on_policy(seq.base, seq.policy);
  Mat fixed(S, U);
  for (int s = 0; s < S; ++s) {
    for (int u = 0; u < U; ++u) {
      fixed(s, u) = mdp.cost(s, u) + gam(s, u) + (1.0 - seq.lambda) * g * qmu[mdp.successor(s, u)];
    }
  }
  for (int j = 0; j < J; ++j) {
    const Vec xmu = on_policy(seq.xi.back(), seq.policy);
    Mat next(S, U);
    for (int s = 0; s < S; ++s) {
      for (int u = 0; u < U; ++u) next(s, u) = fixed(s, u) + seq.lambda * g * xmu[mdp.successor(s, u)];
    }
    seq.xi.push_back(std::move(next));
  }
  return seq;
}

ExactRun exact_lambda_pi(const GridMDP& mdp, const LambdaSchedule& schedule, double tau,
                         const Mat& q0, int max_iters) {
  mdp.validate();
  ExactRun run;
  run.condition13 = check_condition13(q0, mdp);
  run.sequence.push_back({q0, 0});
  run.policies.push_back(exact_policy_improve(q0));
  for (int i = 0; i < max_iters; ++i) {
    const Mat& q = run.sequence.back().q;
    const PolicyTable& mu = run.policies.back();
    Mat next = lambda_evaluate(mdp, q, mu, lambda_value(schedule, i));
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      throw DivergenceError(fmt::format("exact lambda-PI diverged at iteration {}", i));
    }
    const double change = (next - q).cwiseAbs().maxCoeff();
    PolicyTable mu_next = exact_policy_improve(next);
    // Squared differences of equal tables can disagree in the last bits.
    run.condition14.push_back(check_condition14(mdp, next, q, mu_next, mu, true, 1e-15));
    run.sequence.push_back({std::move(next), i + 1});
    run.policies.push_back(std::move(mu_next));
    run.iterations = i + 1;
    if (change <= tau) {
      run.converged = true;
      return run;
    }
  }
  throw NonConvergenceError(
      fmt::format("exact lambda-PI did not converge within {} iterations", max_iters));
}

Mat quadratic_table(const GridMDP& mdp, double action_weight) {
  Mat q(mdp.states(), mdp.action_count());
  for (int s = 0; s < mdp.states(); ++s) {
    for (int u = 0; u < mdp.action_count(); ++u) {
      q(s, u) = mdp.x[s].squaredNorm() + mdp.r[s].squaredNorm() +
                action_weight * mdp.actions[u].squaredNorm();
    }
  }
  return q;
}

std::optional<Mat> scaled_initial_table(const GridMDP& mdp, const Mat& base, double c_start,
                                        int max_doublings) {
  for (int d = 0; d <= max_doublings; ++d) {
    Mat q = std::ldexp(c_start, d) * base;
    if (check_condition13(q, mdp)) return q;
  }
  return std::nullopt;
}

OrderingResult corollary1_compare(const GridMDP& mdp, const Mat& q, double lambda1,
                                  double lambda2, double slack) {
  if (!(lambda1 <= lambda2)) throw PreconditionError("corollary1_compare needs lambda1 <= lambda2");
  const PolicyTable mu = exact_policy_improve(q);
  const Mat q1 = lambda_evaluate(mdp, q, mu, lambda1);
  const Mat q2 = lambda_evaluate(mdp, q, mu, lambda2);
  OrderingResult out;
  out.max_violation = (q2 - q1).maxCoeff();
  out.holds = out.max_violation <= slack;
  return out;
}

namespace {

ScalarGridSpec integrator_spec(Axis r_axis, double sign = 1.0) {
  ScalarGridSpec spec;
  spec.x_axis = {-1.0, 1.0, 21};
  spec.r_axis = r_axis;
  spec.a_axis = {-0.1, 0.1, 3};
  spec.f = [sign](double x, double a) { return sign * x + a; };
  spec.h = [](double r) { return r; };
  spec.q = 5e-3;
  spec.R = 2e-3;
  spec.delta2_scale = 2e-3;
  spec.gamma = 0.8;
  return spec;
}

ReferenceGrid make_reference(std::string name, const ScalarGridSpec& spec) {
  ReferenceGrid g;
  g.name = std::move(name);
  g.mdp = build_scalar_grid(spec);
  g.base = quadratic_table(g.mdp, 50.0);
  return g;
}

}  // namespace

ReferenceGrid regulator_grid() { return make_reference("regulator", integrator_spec({0.0, 0.0, 1})); }

ReferenceGrid tracking_grid() { return make_reference("tracking", integrator_spec({-0.5, 0.5, 11})); }

ReferenceGrid oscillator_grid() {
  return make_reference("oscillator", integrator_spec({0.0, 0.0, 1}, -1.0));
}

std::vector<ReferenceGrid> reference_grids() {
  return {regulator_grid(), oscillator_grid(), tracking_grid()};
}

void write_qtable_csv(std::ostream& os, const GridMDP& mdp, const Mat& q) {
  for (int k = 0; k < mdp.n; ++k) os << fmt::format("x{},", k + 1);
  for (int k = 0; k < mdp.n_r; ++k) os << fmt::format("r{},", k + 1);
  for (Eigen::Index k = 0; k < mdp.actions.front().size(); ++k) os << fmt::format("a{},", k + 1);
  os << "value\n";
  for (int s = 0; s < mdp.states(); ++s) {
    for (int u = 0; u < mdp.action_count(); ++u) {
      for (Eigen::Index k = 0; k < mdp.x[s].size(); ++k) os << fmt::format("{},", mdp.x[s][k]);
      for (Eigen::Index k = 0; k < mdp.r[s].size(); ++k) os << fmt::format("{},", mdp.r[s][k]);
      for (Eigen::Index k = 0; k < mdp.actions[u].size(); ++k) {
        os << fmt::format("{},", mdp.actions[u][k]);
      }
      os << fmt::format("{}\n", q(s, u));
    }
  }
}

}  // namespace rlpi::exact_dp
