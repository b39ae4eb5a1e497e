#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rlpi/common.hpp"
#include "rlpi/qmodel.hpp"
#include "rlpi/system.hpp"

namespace rlpi {

/// Quadratic tracking cost (Cx − r)ᵀS(Cx − r) + aᵀRa with discount γ.
/// C selects the tracked components of x; it defaults to the identity, and
/// the glucose harness uses C = [1 0] so only x₁ is penalized.
struct CostSpec {
  Mat S;
  Mat R;
  double gamma = 0.95;
  Mat C;

  static CostSpec make(Mat S, Mat R, double gamma, Mat C = Mat());
  /// Throws ConfigError unless S, R are symmetric positive definite, γ ∈ (0, 1]
  /// and C is n_r × n.
  void validate(int n, int n_r, int m) const;
};

double stage_cost(const CostSpec& spec, const Vec& x, const Vec& r, const Vec& a);

/// Everything the critic needs besides the data: cost, the uncertainty bound
/// Δ used in Γ and in the robustness conditions, and the action box.
struct Problem {
  CostSpec cost;
  UncertaintySpec uncertainty;
  ActionBounds bounds;
  /// false is the validation mode Γ ≡ 0, in which an exact LQ oracle exists.
  bool gamma_enabled = true;
};

/// ρ²Δ² + (γ/4)‖g‖².
inline double gamma_value(double rho, double delta, double gamma, const Vec& grad) {
  return rho * rho * delta * delta + 0.25 * gamma * grad.squaredNorm();
}

/// Γ̂ at (x, ·, ·) with successor (x', r'): ρ²Δ²(x) + (γ/4)‖∇ₓQ̂(x', r', μ̂(x', r'))‖².
/// `a_next` is μ̂(x', r'); when omitted it is recomputed from `w`.
double gamma_term(const qmodel::QWeights& w, double rho, const Problem& problem, const Vec& x,
                  const Vec& x_next, const Vec& r_next,
                  const std::optional<Vec>& a_next = std::nullopt);

struct LambdaSchedule {
  enum class Rule { kTanhLog, kConstant };

  Rule rule = Rule::kTanhLog;
  /// tanh(coefficient · ln(i + 1)) for kTanhLog, the value itself for kConstant.
  double coefficient = 0.7;
  double cap = 0.9999;

  static LambdaSchedule tanh_log(double coefficient = 0.7);
  static LambdaSchedule constant(double value);
  /// "tanh:0.7", "const:0" (and "vi" as an alias of "const:0").
  static LambdaSchedule parse(const std::string& text);
  std::string describe() const;
};

double lambda_value(const LambdaSchedule& schedule, int i);

struct LsDiagnostics {
  /// 2-norm condition number of the column-scaled regressor.
  double condition = 0.0;
  /// ‖Ψᵀ(Ψŵ − z)‖∞.
  double normal_residual = 0.0;
  double target_inf_norm = 0.0;
};

/// Regressor rows Ψ_b = Φ(x_b, r_b, a_b) − λγΦ(x'_b, r'_b, μ̂(x'_b, r'_b)).
Mat ls_regressor(const TransitionBuffer& buffer, const qmodel::BasisDescriptor& basis,
                 double lambda, double gamma);
/// Targets z_b = l_b + Γ̂_b + (1 − λ)γΦ(x'_b, r'_b, μ̂)ᵀŵ.
Vec ls_targets(const TransitionBuffer& buffer, const qmodel::QWeights& w, double lambda,
               double rho, const Problem& problem);

/// Least-squares solution of Ψŵ = z by column-scaled Householder QR.
/// Throws RankDeficientError when the scaled condition number exceeds
/// `max_condition`.
Vec solve_least_squares(const Mat& psi, const Vec& z, double max_condition = 1e10,
                        LsDiagnostics* diagnostics = nullptr);

/// One λ-PI policy-evaluation step on a buffer collected under μ̂ⁱ.
qmodel::QWeights policy_evaluate_ls(const TransitionBuffer& buffer, const qmodel::QWeights& w,
                                    double lambda, double rho, const Problem& problem,
                                    double max_condition = 1e10,
                                    LsDiagnostics* diagnostics = nullptr);

/// Q̂(x,r,a) − l − Γ̂ − γQ̂(x', r', μ̂(x', r')), with μ̂ the greedy policy of `w`.
double bellman_residual(const qmodel::QWeights& w, const Transition& t, double rho,
                        const Problem& problem);

/// Largest singular value by power iteration on MᵀM.
double spectral_norm(const Mat& m, double tol = 1e-10, int max_iters = 10000);

/// ρ²Δ² ≥ γΔ² + (γ/2)·‖H‖₂·Δ².
inline bool condition10_holds(double rho, double gamma, double hess_norm, double delta) {
  const double d2 = delta * delta;
  return rho * rho * d2 >= gamma * d2 + 0.5 * gamma * hess_norm * d2;
}

/// Condition 10 at x_s with the Hessian taken at (x', r', μ̂*(x', r')).
bool condition10_check(const qmodel::QWeights& w_star, double rho, const Problem& problem,
                       const Vec& x_s, const Vec& x_next, const Vec& r_next);

struct RobustnessOptions {
  int steps = 576;
  /// Clause (b) tolerance is residual_factor · median stage cost over the window.
  double residual_factor = 1e-2;
  double origin_tol = 1e-8;
  double action_tol = 1e-8;
  /// Random points for the positive-definiteness clause in addition to the
  /// visited ones.
  int pd_samples = 2000;
  std::uint64_t seed = 7;
};

struct RobustnessReport {
  bool passed = false;
  bool positive_definite = true;
  bool residual_ok = true;
  bool condition10_ok = true;
  bool origin_action_ok = true;
  /// First failing step (−1 when none) and the clause letter that failed there.
  int first_failing_step = -1;
  char failing_clause = '-';
  double max_abs_residual = 0.0;
  double residual_tol = 0.0;
  double max_hessian_norm = 0.0;
  double origin_action = 0.0;
  int steps_run = 0;

  std::string summary() const;
};

/// Rolls the nominal closed loop under μ̂* for `options.steps` steps starting
/// from `plant`'s current state and evaluates the four certification clauses.
RobustnessReport robustness_check(const qmodel::QWeights& w_star, Plant& plant, double rho,
                                  const Problem& problem, const RobustnessOptions& options);

struct IterationRecord {
  int rho = 1;
  int i = 0;
  double lambda = 0.0;
  Vec w;
  double max_change = 0.0;
  int nonconvex = 0;
  double condition = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;
  double mean_cost = 0.0;
  /// Eq. 14 gradient check on buffer samples (i ≥ 1 only).
  std::optional<bool> gradient_check;
  /// max_b Q̂ⁱ⁺¹ − Q̂ⁱ on the buffer; only asserted when both checks hold.
  double max_increase = 0.0;
  bool monotone_violation = false;
  int exploration_boost = 0;
};

struct RhoAttempt {
  int rho = 1;
  double c_base = 1.0;
  bool init_check_passed = false;
  int iterations = 0;
  bool converged = false;
  std::optional<RobustnessReport> robustness;
};

struct LearnTrace {
  std::vector<IterationRecord> records;
  std::vector<RhoAttempt> attempts;
  int final_rho = 1;
  int iterations = 0;
  bool certified = false;
};

/// One JSON object per iteration, then one per ρ attempt.
void write_trace_jsonl(std::ostream& os, const LearnTrace& trace);

class LearningError : public NonConvergenceError {
 public:
  LearningError(const std::string& what, LearnTrace trace)
      : NonConvergenceError(what), trace_(std::make_shared<LearnTrace>(std::move(trace))) {}
  const LearnTrace& trace() const { return *trace_; }

 private:
  std::shared_ptr<LearnTrace> trace_;
};

struct RlpiConfig {
  LambdaSchedule schedule;
  double tau = 1e-10;
  std::size_t buffer_size = 144;
  int rho_start = 1;
  /// Escalation stops here and the last policy is returned uncertified.
  int rho_max = 50;
  int max_iters = 2000;
  qmodel::InitConfig init;
  /// Doublings, then as many halvings, of c_base tried while the
  /// initialization check fails.
  int init_doublings = 40;
  ExplorationNoise noise;
  std::uint64_t seed = 1;
  /// Reset the learning plant before every collection window.
  bool reset_each_iteration = false;
  /// Reuse the same exploration-noise stream in every iteration.
  bool freeze_noise = false;
  double max_condition = 1e10;
  /// Recollections with 10× stronger noise after a rank-deficient regressor.
  int excitation_retries = 3;
  double monotone_tol = 1e-6;
  bool robustness = true;
  RobustnessOptions robustness_options;
};

struct RlpiSetup {
  Problem problem;
  std::shared_ptr<const qmodel::BasisDescriptor> basis;
  /// Fresh learning plant for each ρ attempt.
  std::function<std::unique_ptr<Plant>()> make_learn_plant;
  /// Fresh plant positioned at the start of the certification window.
  std::function<std::unique_ptr<Plant>()> make_check_plant;
};

struct RlpiResult {
  qmodel::QWeights w;
  Policy policy;
  LearnTrace trace;
};

/// Initialization check on buffer samples: Q⁰ ≥ l + Γ⁰ + γQ⁰(x', r', μ⁰).
bool init_condition_holds(const TransitionBuffer& buffer, const qmodel::QWeights& w0, double rho,
                          const Problem& problem);
/// Gradient-norm check on buffer states: ‖∇ₓQⁱ(x,r,μⁱ)‖² ≤ ‖∇ₓQⁱ⁻¹(x,r,μⁱ⁻¹)‖².
bool gradient_condition_holds(const TransitionBuffer& buffer, const qmodel::QWeights& w_i,
                              const qmodel::QWeights& w_prev, const ActionBounds& bounds);

RlpiResult run_rlpi(const RlpiSetup& setup, const RlpiConfig& config);

}  // namespace rlpi
