#pragma once

#include <string>
#include <vector>

#include "rlpi/exact_dp.hpp"

namespace rlpi::app {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Two-state toys with γ ∈ {0.5, 0.9, 0.99}.
std::vector<exact_dp::ReferenceGrid> toy_grids();

/// Ξʲ non-increasing and within (λγ)ʲ/(1 − λγ)·‖Ξ⁰ − Ξ¹‖∞ of Q̲ for j ≤ J.
CheckResult lemma1_suite(const std::vector<exact_dp::ReferenceGrid>& grids,
                         const std::vector<double>& lambdas, int J = 100, double slack = 1e-10);

/// On every grid: Eq. 13 at Q⁰ and Eq. 14 per iteration are checked; where
/// both hold the sequence must decrease (slack) and meet VI within fp_tol.
/// Grids whose hypotheses fail are reported and excluded; at least
/// `min_grids` must qualify.
CheckResult theorem2_suite(const std::vector<exact_dp::ReferenceGrid>& grids,
                           double slack = 1e-12, double fp_tol = 1e-8, std::size_t min_grids = 1);

/// Q_λ2 ≤ Q_λ1 for every pair λ1 < λ2.
CheckResult corollary1_suite(const std::vector<exact_dp::ReferenceGrid>& grids,
                             const std::vector<double>& lambdas, double slack = 1e-12);

/// Γ-disabled learning on the validation LQT against the Riccati oracle.
CheckResult riccati_suite(double rel_tol = 1e-6);

/// "quick" or "full".
std::vector<CheckResult> verify_suites(const std::string& level);

}  // namespace rlpi::app
