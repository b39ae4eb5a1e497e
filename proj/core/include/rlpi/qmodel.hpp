#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rlpi/common.hpp"
#include "rlpi/system.hpp"

namespace rlpi::qmodel {

/// Variables are laid out as v = [x_1..x_n, r_1..r_nr, a_1..a_m]; a monomial is
/// an exponent per variable.
using Exponents = std::vector<int>;

/// Polynomial basis built from all unique pairwise products z_i·z_j (i ≤ j) of
/// a vector z of monomials. Feature k corresponds to the k-th pair in
/// row-major upper-triangle order: (0,0), (0,1), ..., (0,|z|-1), (1,1), ...
class BasisDescriptor {
 public:
  /// `z_spec` is a comma-separated list of monomials written with the variable
  /// names x1.., r1.., a1.. and optional powers/products, e.g. "x1,x1^2,r1*x2,a1".
  BasisDescriptor(int n, int n_r, int m, std::string_view z_spec);

  /// z = [x1, x2, x1², x2², r, r², a] with n = 2, one reference, one action (K = 28).
  static BasisDescriptor glucose_paper();
  /// z = [x, r, a]: exactly the quadratic forms in (x, r, a).
  static BasisDescriptor linear(int n, int n_r, int m);
  /// z = [x, x², r, r², a] per dimension, the generic environment default.
  static BasisDescriptor augmented(int n, int n_r, int m);
  /// z = [x, x², a]: the augmented family without reference entries.
  static BasisDescriptor state_action(int n, int n_r, int m);

  int n() const { return n_; }
  int n_r() const { return n_r_; }
  int m() const { return m_; }
  int variable_count() const { return n_ + n_r_ + m_; }
  int z_size() const { return static_cast<int>(z_.size()); }
  int K() const { return static_cast<int>(features_.size()); }

  const std::vector<Exponents>& z() const { return z_; }
  const std::vector<Exponents>& features() const { return features_; }
  /// The (i, j) pair that produced feature k.
  std::pair<int, int> feature_pair(int k) const { return pairs_[k]; }
  /// Action index if z entry i is a pure action a_k, otherwise -1.
  int z_action_index(int i) const { return z_action_[i]; }

  /// Canonical text of z, identical to what the constructor accepts.
  std::string z_spec() const;
  std::string feature_name(int k) const;
  /// FNV-1a hash of (n, n_r, m, z_spec).
  std::uint64_t hash() const;

  /// Index of the feature whose monomial equals `e`, or -1.
  int find_feature(const Exponents& e) const;

  bool operator==(const BasisDescriptor& other) const;

 private:
  void build();

  int n_;
  int n_r_;
  int m_;
  std::vector<Exponents> z_;
  std::vector<Exponents> features_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<int> z_action_;
};

struct StateRefAction {
  Vec x;
  Vec r;
  Vec a;
};

/// Coefficients ŵ of Q̂(x,r,a) = Φ(x,r,a)ᵀŵ together with their basis.
struct QWeights {
  std::shared_ptr<const BasisDescriptor> basis;
  Vec w;

  int K() const { return basis->K(); }
};

QWeights make_weights(std::shared_ptr<const BasisDescriptor> basis, Vec w);

Vec basis_eval(const BasisDescriptor& basis, const StateRefAction& p);
double q_eval(const QWeights& w, const StateRefAction& p);
/// ∂Q̂/∂x at p, analytic.
Vec q_grad_x(const QWeights& w, const StateRefAction& p);
/// ∂²Q̂/∂x² at p, analytic and symmetric by construction.
Mat q_hess_x(const QWeights& w, const StateRefAction& p);

/// Q̂ restricted to fixed (x, r): aᵀ C2 a + c1ᵀ a + c0.
struct ActionQuadratic {
  Mat c2;
  Vec c1;
  double c0 = 0.0;

  double value(const Vec& a) const { return a.dot(c2 * a) + c1.dot(a) + c0; }
};

ActionQuadratic action_quadratic(const QWeights& w, const Vec& x, const Vec& r);

struct Improvement {
  Vec a;
  /// C2 was not positive definite; `a` is the best box corner instead.
  bool nonconvex = false;
};

/// Greedy argmin of Q̂(x, r, ·) over the action box.
Improvement policy_improve(const QWeights& w, const Vec& x, const Vec& r,
                           const ActionBounds& bounds);

/// μ̂(x, r) as a Policy closure; holds its own copy of the weights.
Policy greedy_policy(const QWeights& w, const ActionBounds& bounds);

struct InitConfig {
  double c_base = 1.0;
  /// Weight multiplier of every a_k² feature relative to c_base.
  double action_ratio = 1e5;
};

/// Diagonal positive-definite initial weights: c_base on every z_i², with the
/// action squares raised by `action_ratio`; all cross terms zero.
QWeights init_q0(std::shared_ptr<const BasisDescriptor> basis, const InitConfig& config);

/// {"format": "rlpi.qweights/1", "basis": {...}, "features": [...], "w": [...]}
std::string weights_to_json(const QWeights& w);
QWeights weights_from_json(std::string_view text);

}  // namespace rlpi::qmodel
