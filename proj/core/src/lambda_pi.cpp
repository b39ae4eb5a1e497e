#include "rlpi/lambda_pi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace rlpi {

using qmodel::QWeights;
using qmodel::StateRefAction;

CostSpec CostSpec::make(Mat S, Mat R, double gamma, Mat C) {
  CostSpec c;
  c.S = std::move(S);
  c.R = std::move(R);
  c.gamma = gamma;
  c.C = C.size() == 0 ? Mat::Identity(c.S.rows(), c.S.rows()) : std::move(C);
  return c;
}

namespace {

void require_spd(const Mat& M, const char* name) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    throw ConfigError(fmt::format("{} must be a non-empty square matrix", name));
  }
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + M.cwiseAbs().maxCoeff())) {
    throw ConfigError(fmt::format("{} must be symmetric", name));
  }
  Eigen::LLT<Mat> llt(M);
  if (llt.info() != Eigen::Success) {
    throw ConfigError(fmt::format("{} must be positive definite", name));
  }
}

}  // namespace

void CostSpec::validate(int n, int n_r, int m) const {
  require_spd(S, "S");
  require_spd(R, "R");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError(fmt::format("gamma = {} outside (0, 1]", gamma));
  if (S.rows() != n_r || C.rows() != n_r || C.cols() != n || R.rows() != m) {
    throw ConfigError(fmt::format(
        "cost dimensions (S {}x{}, C {}x{}, R {}x{}) do not match n={}, n_r={}, m={}", S.rows(),
        S.cols(), C.rows(), C.cols(), R.rows(), R.cols(), n, n_r, m));
  }
}

double stage_cost(const CostSpec& spec, const Vec& x, const Vec& r, const Vec& a) {
  if (spec.C.cols() != x.size() || spec.C.rows() != r.size() || spec.R.rows() != a.size()) {
    throw PreconditionError("stage_cost: dimension mismatch");
  }
  const Vec e = spec.C * x - r;
  return e.dot(spec.S * e) + a.dot(spec.R * a);
}

double gamma_term(const QWeights& w, double rho, const Problem& problem, const Vec& x,
                  const Vec& x_next, const Vec& r_next, const std::optional<Vec>& a_next) {
  if (!problem.gamma_enabled) return 0.0;
  const Vec a = a_next ? *a_next : qmodel::policy_improve(w, x_next, r_next, problem.bounds).a;
  const Vec g = qmodel::q_grad_x(w, {x_next, r_next, a});
  return gamma_value(rho, uncertainty_bound(problem.uncertainty, x), problem.cost.gamma, g);
}

LambdaSchedule LambdaSchedule::tanh_log(double coefficient) {
  LambdaSchedule s;
  s.rule = Rule::kTanhLog;
  s.coefficient = coefficient;
  return s;
}

LambdaSchedule LambdaSchedule::constant(double value) {
  if (!(value >= 0.0 && value < 1.0)) {
    throw ConfigError(fmt::format("constant lambda {} outside [0, 1)", value));
  }
  LambdaSchedule s;
  s.rule = Rule::kConstant;
  s.coefficient = value;
  return s;
}

LambdaSchedule LambdaSchedule::parse(const std::string& text) {
  if (text == "vi") return constant(0.0);
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError(fmt::format("bad lambda rule '{}'", text));
  const std::string kind = text.substr(0, colon);
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("bad lambda rule '{}'", text));
  }
  if (kind == "tanh") {
    if (!(value > 0.0)) throw ConfigError("tanh lambda coefficient must be positive");
    return tanh_log(value);
  }
  if (kind == "const") return constant(value);
  throw ConfigError(fmt::format("unknown lambda rule '{}'", kind));
}

std::string LambdaSchedule::describe() const {
  return rule == Rule::kTanhLog ? fmt::format("tanh:{}", coefficient)
                                : fmt::format("const:{}", coefficient);
}

double lambda_value(const LambdaSchedule& schedule, int i) {
  if (i < 0) throw PreconditionError("lambda_value: negative iteration index");
  const double raw = schedule.rule == LambdaSchedule::Rule::kTanhLog
                         ? std::tanh(schedule.coefficient * std::log(i + 1.0))
                         : schedule.coefficient;
  return std::min(raw, schedule.cap);
}

Mat ls_regressor(const TransitionBuffer& buffer, const qmodel::BasisDescriptor& basis,
                 double lambda, double gamma) {
  Mat psi(static_cast<Eigen::Index>(buffer.size()), basis.K());
  for (std::size_t b = 0; b < buffer.size(); ++b) {
    const Transition& t = buffer[b];
    psi.row(b) = (qmodel::basis_eval(basis, {t.x, t.r, t.a}) -
                  lambda * gamma * qmodel::basis_eval(basis, {t.x_next, t.r_next, t.a_next_policy}))
                     .transpose();
  }
  return psi;
}

Vec ls_targets(const TransitionBuffer& buffer, const QWeights& w, double lambda, double rho,
               const Problem& problem) {
  const double gamma = problem.cost.gamma;
  Vec z(static_cast<Eigen::Index>(buffer.size()));
  for (std::size_t b = 0; b < buffer.size(); ++b) {
    const Transition& t = buffer[b];
    const double next_q = qmodel::q_eval(w, {t.x_next, t.r_next, t.a_next_policy});
    z[b] = stage_cost(problem.cost, t.x, t.r, t.a) +
           gamma_term(w, rho, problem, t.x, t.x_next, t.r_next, t.a_next_policy) +
           (1.0 - lambda) * gamma * next_q;
  }
  return z;
}

Vec solve_least_squares(const Mat& psi, const Vec& z, double max_condition,
                        LsDiagnostics* diagnostics) {
  if (psi.rows() < psi.cols()) {
    throw RankDeficientError(
        fmt::format("regressor has {} rows for {} unknowns", psi.rows(), psi.cols()),
        std::numeric_limits<double>::infinity());
  }
  Vec scale = psi.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < scale.size(); ++k) {
    if (scale[k] == 0.0) {
      throw RankDeficientError(fmt::format("regressor column {} is identically zero", k),
                               std::numeric_limits<double>::infinity());
    }
  }
  const Mat scaled = psi * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Mat> svd(scaled);
  const auto& sv = svd.singularValues();
  const double cond = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                              : std::numeric_limits<double>::infinity();
  if (!(cond <= max_condition)) {
    throw RankDeficientError(
        fmt::format("regressor is rank deficient: scaled condition estimate {:.3e}", cond), cond);
  }
  Eigen::HouseholderQR<Mat> qr(scaled);
  const Vec w = qr.solve(z).cwiseQuotient(scale);
  if (diagnostics != nullptr) {
    diagnostics->condition = cond;
    diagnostics->normal_residual = (psi.transpose() * (psi * w - z)).lpNorm<Eigen::Infinity>();
    diagnostics->target_inf_norm = z.lpNorm<Eigen::Infinity>();
  }
  return w;
}

QWeights policy_evaluate_ls(const TransitionBuffer& buffer, const QWeights& w, double lambda,
                            double rho, const Problem& problem, double max_condition,
                            LsDiagnostics* diagnostics) {
  const Mat psi = ls_regressor(buffer, *w.basis, lambda, problem.cost.gamma);
  const Vec z = ls_targets(buffer, w, lambda, rho, problem);
  Vec next = solve_least_squares(psi, z, max_condition, diagnostics);
  // Only non-finite weights are an error: features such as a² live on very
  // small scales, so large weights are not by themselves a divergence.
  if (!next.allFinite()) throw DivergenceError("least-squares weights are not finite");
  return QWeights{w.basis, std::move(next)};
}

double bellman_residual(const QWeights& w, const Transition& t, double rho,
                        const Problem& problem) {
  const Vec a_next = qmodel::policy_improve(w, t.x_next, t.r_next, problem.bounds).a;
  return qmodel::q_eval(w, {t.x, t.r, t.a}) - stage_cost(problem.cost, t.x, t.r, t.a) -
         gamma_term(w, rho, problem, t.x, t.x_next, t.r_next, a_next) -
         problem.cost.gamma * qmodel::q_eval(w, {t.x_next, t.r_next, a_next});
}

double spectral_norm(const Mat& m, double tol, int max_iters) {
  if (m.size() == 0) return 0.0;
  const Mat g = m.transpose() * m;
  Vec v(g.cols());
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = 1.0 / (1.5 + static_cast<double>(k));
  v.normalize();
  double sigma2 = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vec next = g * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double change = std::abs(norm - sigma2);
    sigma2 = norm;
    v = std::move(next);
    if (change <= tol * sigma2) break;
  }
  return std::sqrt(sigma2);
}

bool condition10_check(const QWeights& w_star, double rho, const Problem& problem, const Vec& x_s,
                       const Vec& x_next, const Vec& r_next) {
  const double delta = uncertainty_bound(problem.uncertainty, x_s);
  if (delta == 0.0) return true;
  const Vec a = qmodel::policy_improve(w_star, x_next, r_next, problem.bounds).a;
  const double h = spectral_norm(qmodel::q_hess_x(w_star, {x_next, r_next, a}));
  return condition10_holds(rho, problem.cost.gamma, h, delta);
}

std::string RobustnessReport::summary() const {
  if (passed) {
    return fmt::format("passed over {} steps (max |residual| {:.3e} <= {:.3e}, max ||H|| {:.4g})",
                       steps_run, max_abs_residual, residual_tol, max_hessian_norm);
  }
  const char* what = "unknown";
  switch (failing_clause) {
    case 'a': what = "Q not positive definite"; break;
    case 'b': what = "Bellman residual above tolerance"; break;
    case 'c': what = "condition 10 violated"; break;
    case 'd': what = "greedy action at the origin is not zero"; break;
    case '!': what = "closed loop diverged"; break;
    default: break;
  }
  return fmt::format("failed clause ({}) {} at step {} (max |residual| {:.3e}, tol {:.3e}, "
                     "max ||H|| {:.4g}, mu(0,0) {:.3e})",
                     failing_clause, what, first_failing_step, max_abs_residual, residual_tol,
                     max_hessian_norm, origin_action);
}

RobustnessReport robustness_check(const QWeights& w_star, Plant& plant, double rho,
                                  const Problem& problem, const RobustnessOptions& options) {
  RobustnessReport rep;
  const Policy mu = qmodel::greedy_policy(w_star, problem.bounds);
  auto fail = [&rep](int step, char clause) {
    if (rep.first_failing_step < 0 && rep.failing_clause == '-') {
      rep.first_failing_step = step;
      rep.failing_clause = clause;
    }
  };

  TransitionBuffer window;
  try {
    window = collect_buffer(plant, mu, mu, static_cast<std::size_t>(options.steps), 0);
  } catch (const PartialBufferError& e) {
    rep.steps_run = static_cast<int>(e.collected());
    fail(rep.steps_run, '!');
    return rep;
  }
  rep.steps_run = static_cast<int>(window.size());

  std::vector<double> costs;
  costs.reserve(window.size());
  for (const auto& t : window.entries) costs.push_back(stage_cost(problem.cost, t.x, t.r, t.a));
  std::vector<double> sorted = costs;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  rep.residual_tol = options.residual_factor * sorted[sorted.size() / 2];

  const int n = w_star.basis->n();
  const int nr = w_star.basis->n_r();
  const int m = w_star.basis->m();
  Vec radius = Vec::Zero(n + nr + m);

  for (std::size_t b = 0; b < window.size(); ++b) {
    const Transition& t = window[b];
    const int step = static_cast<int>(b);
    Vec p(n + nr + m);
    p << t.x, t.r, t.a;
    radius = radius.cwiseMax(p.cwiseAbs());

    const double q = qmodel::q_eval(w_star, {t.x, t.r, t.a});
    if (p.norm() > 0.0 && !(q > 0.0)) {
      rep.positive_definite = false;
      fail(step, 'a');
    }
    const double res = std::abs(bellman_residual(w_star, t, rho, problem));
    rep.max_abs_residual = std::max(rep.max_abs_residual, res);
    if (!(res <= rep.residual_tol)) {
      rep.residual_ok = false;
      fail(step, 'b');
    }
    const double delta = uncertainty_bound(problem.uncertainty, t.x);
    const double h = spectral_norm(qmodel::q_hess_x(w_star, {t.x_next, t.r_next, t.a_next_policy}));
    rep.max_hessian_norm = std::max(rep.max_hessian_norm, h);
    if (delta > 0.0 && !condition10_holds(rho, problem.cost.gamma, h, delta)) {
      rep.condition10_ok = false;
      fail(step, 'c');
    }
  }

  CounterRng rng(options.seed, 0xA11CE);
  Vec p(n + nr + m);
  for (int s = 0; s < options.pd_samples; ++s) {
    for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = rng.uniform(-radius[k], radius[k]);
    if (p.norm() == 0.0) continue;
    const double q = qmodel::q_eval(w_star, {p.head(n), p.segment(n, nr), p.tail(m)});
    if (!(q > 0.0)) {
      rep.positive_definite = false;
      fail(-1, 'a');
      break;
    }
  }
  const double q0 = qmodel::q_eval(w_star, {Vec::Zero(n), Vec::Zero(nr), Vec::Zero(m)});
  if (!(std::abs(q0) <= options.origin_tol)) {
    rep.positive_definite = false;
    fail(-1, 'a');
  }

  const Vec a0 = mu(Vec::Zero(n), Vec::Zero(nr));
  rep.origin_action = a0.lpNorm<Eigen::Infinity>();
  if (!(rep.origin_action <= options.action_tol)) {
    rep.origin_action_ok = false;
    fail(-1, 'd');
  }

  rep.passed = rep.positive_definite && rep.residual_ok && rep.condition10_ok && rep.origin_action_ok;
  return rep;
}

void write_trace_jsonl(std::ostream& os, const LearnTrace& trace) {
  for (const auto& r : trace.records) {
    nlohmann::ordered_json j;
    j["type"] = "iteration";
    j["rho"] = r.rho;
    j["i"] = r.i;
    j["lambda"] = r.lambda;
    j["max_change"] = r.max_change;
    j["condition"] = r.condition;
    j["nonconvex"] = r.nonconvex;
    j["x_min"] = r.x_min;
    j["x_max"] = r.x_max;
    j["mean_cost"] = r.mean_cost;
    if (r.gradient_check) {
      j["gradient_check"] = *r.gradient_check;
    } else {
      j["gradient_check"] = nullptr;
    }
    j["max_increase"] = r.max_increase;
    j["monotone_violation"] = r.monotone_violation;
    j["exploration_boost"] = r.exploration_boost;
    j["w"] = std::vector<double>(r.w.data(), r.w.data() + r.w.size());
    os << j.dump() << '\n';
  }
  for (const auto& a : trace.attempts) {
    nlohmann::ordered_json j;
    j["type"] = "attempt";
    j["rho"] = a.rho;
    j["c_base"] = a.c_base;
    j["init_check_passed"] = a.init_check_passed;
    j["iterations"] = a.iterations;
    j["converged"] = a.converged;
    if (a.robustness) {
      j["robustness_passed"] = a.robustness->passed;
      j["robustness"] = a.robustness->summary();
    } else {
      j["robustness_passed"] = nullptr;
    }
    os << j.dump() << '\n';
  }
  nlohmann::ordered_json j;
  j["type"] = "final";
  j["rho"] = trace.final_rho;
  j["iterations"] = trace.iterations;
  j["certified"] = trace.certified;
  os << j.dump() << '\n';
}

bool init_condition_holds(const TransitionBuffer& buffer, const QWeights& w0, double rho,
                          const Problem& problem) {
  for (const auto& t : buffer.entries) {
    const double lhs = qmodel::q_eval(w0, {t.x, t.r, t.a});
    const double rhs = stage_cost(problem.cost, t.x, t.r, t.a) +
                       gamma_term(w0, rho, problem, t.x, t.x_next, t.r_next, t.a_next_policy) +
                       problem.cost.gamma * qmodel::q_eval(w0, {t.x_next, t.r_next, t.a_next_policy});
    if (!(lhs >= rhs)) return false;
  }
  return true;
}

bool gradient_condition_holds(const TransitionBuffer& buffer, const QWeights& w_i,
                              const QWeights& w_prev, const ActionBounds& bounds) {
  for (const auto& t : buffer.entries) {
    const Vec a_i = qmodel::policy_improve(w_i, t.x, t.r, bounds).a;
    const Vec a_prev = qmodel::policy_improve(w_prev, t.x, t.r, bounds).a;
    const double gi = qmodel::q_grad_x(w_i, {t.x, t.r, a_i}).squaredNorm();
    const double gp = qmodel::q_grad_x(w_prev, {t.x, t.r, a_prev}).squaredNorm();
    if (gi > gp) return false;
  }
  return true;
}

namespace {

struct AttemptOutcome {
  QWeights w;
  bool converged = false;
};

ExplorationNoise boosted(const ExplorationNoise& base, int boost) {
  const double f = std::pow(10.0, boost);
  return {base.lo * f, base.hi * f};
}

TransitionBuffer collect_iteration(Plant& plant, const QWeights& w, const QWeights* w_prev, int i,
                                   int rho, int boost, const RlpiSetup& setup,
                                   const RlpiConfig& config) {
  const Problem& problem = setup.problem;
  const Policy mu = qmodel::greedy_policy(w, problem.bounds);
  Policy mu_prev;
  if (w_prev != nullptr) mu_prev = qmodel::greedy_policy(*w_prev, problem.bounds);
  const std::uint64_t stream =
      config.freeze_noise ? 0 : (static_cast<std::uint64_t>(rho) << 32) + static_cast<std::uint64_t>(i);
  CounterRng rng = CounterRng(config.seed, 0x401CE).split(stream * 8 + static_cast<std::uint64_t>(boost));
  const ExplorationNoise noise = boosted(config.noise, boost);
  ActionSource source = [&](const Vec& x, const Vec& r) {
    return exploration_action(i, mu, w_prev ? &mu_prev : nullptr, x, r, rng, noise, problem.bounds);
  };
  return collect_buffer(plant, source, mu, config.buffer_size,
                        static_cast<std::size_t>(setup.basis->K()), i);
}

AttemptOutcome run_attempt(const RlpiSetup& setup, const RlpiConfig& config, int rho,
                           LearnTrace& trace) {
  const Problem& problem = setup.problem;
  std::unique_ptr<Plant> plant = setup.make_learn_plant();
  RhoAttempt attempt;
  attempt.rho = rho;
  attempt.c_base = config.init.c_base;

  QWeights w = qmodel::init_q0(setup.basis, config.init);
  std::optional<QWeights> w_prev;
  bool init_ok = false;

  for (int i = 0; i < config.max_iters; ++i) {
    const double lambda = lambda_value(config.schedule, i);
    if (config.reset_each_iteration && i > 0) plant->reset();

    TransitionBuffer buffer;
    QWeights next;
    LsDiagnostics diag;
    int boost = 0;
    for (;;) {
      buffer = collect_iteration(*plant, w, w_prev ? &*w_prev : nullptr, i, rho, boost, setup, config);
      if (i == 0) {
        // Scale Q⁰ up until the initialization check holds on the first buffer.
        // Scaling leaves μ⁰ and therefore the buffer unchanged.
        init_ok = false;
        // The gradient part of Γ grows like c², so a too-large Q⁰ fails as
        // well: try doublings first, then halvings.
        for (int k = 0; k <= 2 * config.init_doublings; ++k) {
          const int d = k <= config.init_doublings ? k : config.init_doublings - k;
          qmodel::InitConfig ic = config.init;
          ic.c_base = config.init.c_base * std::ldexp(1.0, d);
          QWeights candidate = qmodel::init_q0(setup.basis, ic);
          if (init_condition_holds(buffer, candidate, rho, problem)) {
            w = std::move(candidate);
            attempt.c_base = ic.c_base;
            init_ok = true;
            break;
          }
        }
        attempt.init_check_passed = init_ok;
      }
      try {
        next = policy_evaluate_ls(buffer, w, lambda, rho, problem, config.max_condition, &diag);
        break;
      } catch (const RankDeficientError&) {
        if (boost >= config.excitation_retries) throw;
        ++boost;
        if (config.reset_each_iteration) plant->reset();
      }
    }

    IterationRecord rec;
    rec.rho = rho;
    rec.i = i;
    rec.lambda = lambda;
    rec.w = next.w;
    rec.condition = diag.condition;
    rec.exploration_boost = boost;
    rec.x_min = std::numeric_limits<double>::infinity();
    rec.x_max = -std::numeric_limits<double>::infinity();
    double max_change = 0.0;
    double max_increase = -std::numeric_limits<double>::infinity();
    double q_scale = 1.0;
    double cost_sum = 0.0;
    for (const auto& t : buffer.entries) {
      const Vec phi = qmodel::basis_eval(*setup.basis, {t.x, t.r, t.a});
      const double q_old = phi.dot(w.w);
      const double diff = phi.dot(next.w) - q_old;
      max_change = std::max(max_change, std::abs(diff));
      max_increase = std::max(max_increase, diff);
      q_scale = std::max(q_scale, std::abs(q_old));
      rec.x_min = std::min(rec.x_min, t.x.minCoeff());
      rec.x_max = std::max(rec.x_max, t.x.maxCoeff());
      cost_sum += stage_cost(problem.cost, t.x, t.r, t.a);
      if (Eigen::LLT<Mat>(qmodel::action_quadratic(w, t.x_next, t.r_next).c2).info() != Eigen::Success) {
        ++rec.nonconvex;
      }
    }
    rec.mean_cost = cost_sum / static_cast<double>(buffer.size());
    rec.max_change = max_change;
    rec.max_increase = max_increase;
    bool hypotheses = init_ok;
    if (w_prev) {
      rec.gradient_check = gradient_condition_holds(buffer, w, *w_prev, problem.bounds);
      hypotheses = hypotheses && *rec.gradient_check;
    }
    rec.monotone_violation = hypotheses && max_increase > config.monotone_tol * q_scale;
    trace.records.push_back(std::move(rec));

    w_prev = std::move(w);
    w = std::move(next);
    attempt.iterations = i + 1;
    if (max_change <= config.tau) {
      attempt.converged = true;
      trace.attempts.push_back(attempt);
      return {std::move(w), true};
    }
  }
  trace.attempts.push_back(attempt);
  return {std::move(w), false};
}

}  // namespace

RlpiResult run_rlpi(const RlpiSetup& setup, const RlpiConfig& config) {
  if (!setup.basis || !setup.make_learn_plant) throw ConfigError("run_rlpi: incomplete setup");
  const auto& b = *setup.basis;
  setup.problem.cost.validate(b.n(), b.n_r(), b.m());
  if (setup.problem.bounds.dim() != b.m()) throw ConfigError("run_rlpi: action bounds dimension");
  if (config.rho_start < 1) throw ConfigError("rho must start at 1 or above");
  if (!(config.tau > 0.0)) throw ConfigError("tau must be positive");
  if (config.max_iters < 1) throw ConfigError("max_iters must be positive");

  LearnTrace trace;
  const bool certify = config.robustness && setup.problem.gamma_enabled;
  if (certify && !setup.make_check_plant) throw ConfigError("run_rlpi: robustness check needs a plant");

  for (int rho = config.rho_start;; ++rho) {
    AttemptOutcome out;
    try {
      out = run_attempt(setup, config, rho, trace);
    } catch (const PartialBufferError& e) {
      throw LearningError(fmt::format("rho = {}: {}", rho, e.what()), std::move(trace));
    } catch (const DivergenceError& e) {
      throw LearningError(fmt::format("rho = {}: {}", rho, e.what()), std::move(trace));
    } catch (const RankDeficientError& e) {
      throw LearningError(fmt::format("rho = {}: insufficient excitation: {}", rho, e.what()),
                          std::move(trace));
    }
    trace.iterations += trace.attempts.back().iterations;
    trace.final_rho = rho;
    if (!out.converged) {
      throw LearningError(
          fmt::format("rho = {}: no convergence within {} iterations", rho, config.max_iters),
          std::move(trace));
    }
    if (!certify) {
      Policy policy = qmodel::greedy_policy(out.w, setup.problem.bounds);
      return {std::move(out.w), std::move(policy), std::move(trace)};
    }
    std::unique_ptr<Plant> check = setup.make_check_plant();
    RobustnessReport report =
        robustness_check(out.w, *check, rho, setup.problem, config.robustness_options);
    trace.attempts.back().robustness = report;
    if (report.passed || rho >= config.rho_max) {
      trace.certified = report.passed;
      Policy policy = qmodel::greedy_policy(out.w, setup.problem.bounds);
      return {std::move(out.w), std::move(policy), std::move(trace)};
    }
  }
}

}  // namespace rlpi
