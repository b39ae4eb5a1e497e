#pragma once

#include <memory>
#include <string>

#include "rlpi/common.hpp"
#include "rlpi/lambda_pi.hpp"
#include "rlpi/qmodel.hpp"
#include "rlpi/system.hpp"

namespace rlpi::envs {

/// x' = Ax + Ba.
class LinearDynamics : public Dynamics {
 public:
  LinearDynamics(Mat A, Mat B);
  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int action_dim() const override { return static_cast<int>(B_.cols()); }
  Vec nominal(const Vec& x, const Vec& a) const override { return A_ * x + B_ * a; }
  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }

 private:
  Mat A_;
  Mat B_;
};

/// Discounted linear-quadratic tracking problem with reference r' = Hr.
class LQTEnv {
 public:
  /// Throws ConfigError when (A, B) is not controllable or the cost does not
  /// match the dimensions.
  LQTEnv(Mat A, Mat B, Mat H, CostSpec cost);

  /// Γ-disabled validation instance used by the Riccati equivalence tests.
  static LQTEnv validation();
  /// Open-loop unstable instance for the robustness experiments.
  static LQTEnv uncertain_benchmark();

  const Mat& A() const { return dyn_->A(); }
  const Mat& B() const { return dyn_->B(); }
  const Mat& H() const { return H_; }
  const CostSpec& cost() const { return cost_; }
  int n() const { return dyn_->state_dim(); }
  int n_r() const { return static_cast<int>(H_.rows()); }
  int m() const { return dyn_->action_dim(); }

  std::shared_ptr<const Dynamics> dynamics() const { return dyn_; }
  Environment environment(UncertaintySpec uncertainty = {},
                          StepMode mode = StepMode::kNominal) const;
  Exosystem exosystem() const { return Exosystem::linear(H_); }

 private:
  std::shared_ptr<const LinearDynamics> dyn_;
  Mat H_;
  CostSpec cost_;
};

/// rank [B, AB, ..., Aⁿ⁻¹B] == n.
bool controllable(const Mat& A, const Mat& B);

struct RiccatiSolution {
  /// Value matrix over s = [x; r].
  Mat P;
  /// Q*(x, r, a) = vᵀMv with v = [x; r; a].
  Mat M;
  /// Optimal feedback a = K·[x; r].
  Mat K;
  qmodel::QWeights w;
  int iterations = 0;
  /// Spectral radius of √γ times the augmented closed-loop matrix.
  double closed_loop_radius = 0.0;
};

/// Discounted Riccati recursion on the augmented (x, r) system, iterated to a
/// fixed point (tolerance `tol` on the max entry change). Discounting is
/// handled as the undiscounted problem on (√γF, √γG). The resulting quadratic
/// form is mapped into `basis`, which must contain every product of the
/// linear monomials of x, r and a.
RiccatiSolution lqt_riccati_oracle(const LQTEnv& env,
                                   std::shared_ptr<const qmodel::BasisDescriptor> basis,
                                   double tol = 1e-12, int max_iters = 1000000);

/// Weights of the quadratic form vᵀMv, v = [x; r; a], in `basis`.
qmodel::QWeights quadratic_form_weights(const Mat& M,
                                        std::shared_ptr<const qmodel::BasisDescriptor> basis);

inline constexpr double kToyLimit = 10.0;

/// x' = 0.8 sin x + 0.9a, clipped to [−10, 10].
double nonlinear_toy_step(double x, double a);

class ToyDynamics : public Dynamics {
 public:
  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  Vec nominal(const Vec& x, const Vec& a) const override;
};

/// `env` in uncertain mode with `spec`'s realization. The realization is
/// checked against Δ on `samples` states in [−radius, radius]ⁿ; any violation
/// beyond `slack` is a ConfigError.
Environment make_uncertain(const Environment& env, const UncertaintySpec& spec,
                           std::size_t samples = 10000, double radius = 10.0,
                           std::uint64_t seed = 11, double slack = 1e-12);

}  // namespace rlpi::envs
