#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rlpi/common.hpp"
#include "rlpi/lambda_pi.hpp"

namespace rlpi::exact_dp {

/// Finite deterministic MDP over grid points (x, r) and a finite action set.
/// Γ tables are not stored: they are rebuilt from a Q table on demand.
struct GridMDP {
  int n = 1;
  int n_r = 1;
  std::vector<Vec> x;
  std::vector<Vec> r;
  /// Action values in ascending order; index order is the tie-break order.
  std::vector<Vec> actions;
  /// successor(s, u): grid index of the projected successor.
  Eigen::MatrixXi successor;
  /// l(s, u) ≥ 0.
  Mat cost;
  /// Δ²(x_s).
  Vec delta2;
  double gamma = 0.95;
  double rho = 1.0;
  /// Include (γ/4)‖∇ₓQ‖² in Γ. Without it Γ reduces to ρ²Δ².
  bool gradient_term = true;
  /// Central-difference neighbours along each x dimension (S × n). A state is
  /// its own neighbour at a boundary (one-sided difference); lo == hi means
  /// no stencil and a zero derivative.
  Eigen::MatrixXi stencil_lo;
  Eigen::MatrixXi stencil_hi;
  std::vector<bool> interior;

  int states() const { return static_cast<int>(x.size()); }
  int action_count() const { return static_cast<int>(actions.size()); }
  /// Throws ConfigError when tables disagree in size, a successor is off the
  /// grid, or a cost is negative.
  void validate() const;
};

struct Axis {
  double lo = -1.0;
  double hi = 1.0;
  int count = 21;

  double at(int k) const;
  /// Nearest grid index after clamping to [lo, hi].
  int project(double v) const;
};

/// Scalar x, scalar r grid: x' = f(x, a), r' = h(r), both projected to the
/// nearest grid point; l = q(x − r)² + R·a²; Δ² = delta2_scale·x².
struct ScalarGridSpec {
  Axis x_axis;
  Axis r_axis;
  Axis a_axis;
  std::function<double(double, double)> f;
  std::function<double(double)> h;
  double q = 1.0;
  double R = 1.0;
  double delta2_scale = 0.0;
  double gamma = 0.95;
  double rho = 1.0;
  bool gradient_term = true;
};

GridMDP build_scalar_grid(const ScalarGridSpec& spec);

/// Two states x ∈ {0, 1} (r ≡ 0), two actions a ∈ {0, 1}; action a moves the
/// system to state a. l = x² + R·a², Δ² = delta2·x², no gradient stencil.
GridMDP two_state_toy(double gamma = 0.9, double R = 0.5, double delta2 = 0.1);

struct QTable {
  Mat q;
  int iteration = 0;
};

using PolicyTable = std::vector<int>;

/// Greedy action index per state; exact ties go to the smaller action.
PolicyTable exact_policy_improve(const Mat& q);

/// Squared x-gradient norm of Q(·, r_s, a_{μ(s)}) at every state s.
Vec gradient_norms(const GridMDP& mdp, const Mat& q, const PolicyTable& mu);

/// Γ^Q(s, u) = ρ²Δ²(x_s) + (γ/4)‖∇ₓQ(s', μ(s'))‖², s' = successor(s, u).
Mat gamma_table(const GridMDP& mdp, const Mat& q, const PolicyTable& mu);

/// One λ-weighted evaluation of μ = greedy(Q) solved exactly as a linear system:
/// Q_λ = l + Γ^Q + λγQ_λ(s', μ) + (1 − λ)γQ(s', μ). λ = 1 is plain policy evaluation.
Mat lambda_evaluate(const GridMDP& mdp, const Mat& q, const PolicyTable& mu, double lambda);

/// Q ≥ l + Γ^Q + γQ(s', μ(s')) with μ = greedy(Q), slack allowed on the right.
bool check_condition13(const Mat& q, const GridMDP& mdp, double slack = 0.0);
/// Largest violation of the inequality above (≤ 0 when it holds).
double condition13_violation(const Mat& q, const GridMDP& mdp);

/// ‖∇ₓQⁱ(s, μⁱ)‖² ≤ ‖∇ₓQⁱ⁻¹(s, μⁱ⁻¹)‖² at every (interior) state.
bool check_condition14(const GridMDP& mdp, const Mat& q_i, const Mat& q_prev,
                       const PolicyTable& mu_i, const PolicyTable& mu_prev,
                       bool interior_only = true, double slack = 0.0);

struct InnerSequence {
  std::vector<Mat> xi;
  PolicyTable policy;
  double lambda = 0.0;
  Mat base;
  /// Q̲, the limit of the sequence, from the direct linear solve.
  Mat limit;
  bool precondition_ok = false;
  double precondition_violation = 0.0;
};

/// Ξ⁰ = Q, μ = greedy(Q), Q̲ solved directly.
InnerSequence make_inner_sequence(const GridMDP& mdp, const Mat& q, double lambda);
/// Appends Ξ¹..Ξᴶ.
InnerSequence inner_iterate(const GridMDP& mdp, InnerSequence seq, int J);

struct ExactRun {
  std::vector<QTable> sequence;
  std::vector<PolicyTable> policies;
  /// Condition 14 at i ≥ 1 (index i − 1).
  std::vector<bool> condition14;
  bool condition13 = false;
  bool converged = false;
  int iterations = 0;
};

ExactRun exact_lambda_pi(const GridMDP& mdp, const LambdaSchedule& schedule, double tau,
                         const Mat& q0, int max_iters = 5000);

/// Smallest c = c_start·2ᵏ for which c·base satisfies condition 13.
std::optional<Mat> scaled_initial_table(const GridMDP& mdp, const Mat& base, double c_start,
                                        int max_doublings = 60);

/// The diagonal quadratic table |x|² + |r|² + action_weight·|a|².
Mat quadratic_table(const GridMDP& mdp, double action_weight);

struct OrderingResult {
  bool holds = false;
  /// max(Q_λ2 − Q_λ1).
  double max_violation = 0.0;
};

/// Q_λ2 ≤ Q_λ1 + slack pointwise for the λ-evaluations of greedy(Q).
OrderingResult corollary1_compare(const GridMDP& mdp, const Mat& q, double lambda1,
                                  double lambda2, double slack = 1e-12);

/// A named grid with the table whose scaled copy seeds the iteration.
struct ReferenceGrid {
  std::string name;
  GridMDP mdp;
  Mat base;
  double c_start = 1e-3;
};

/// Integrator grids x' = x + a with a ∈ {−0.1, 0, 0.1}, so every successor is
/// a grid point. "regulator" fixes r = 0; "tracking" carries a constant r.
/// "oscillator" is the regulator with x' = −x + a.
ReferenceGrid regulator_grid();
ReferenceGrid oscillator_grid();
ReferenceGrid tracking_grid();
std::vector<ReferenceGrid> reference_grids();

/// Columns x1.., r1.., a1.., value.
void write_qtable_csv(std::ostream& os, const GridMDP& mdp, const Mat& q);

}  // namespace rlpi::exact_dp
