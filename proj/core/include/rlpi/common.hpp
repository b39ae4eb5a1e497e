#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace rlpi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad dimensions, negative bounds...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A rollout produced non-finite or exploding state values.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Buffer collection aborted before B transitions were gathered.
class PartialBufferError : public Error {
 public:
  PartialBufferError(const std::string& what, std::size_t collected)
      : Error(what), collected_(collected) {}
  std::size_t collected() const { return collected_; }

 private:
  std::size_t collected_;
};

/// The least-squares regressor does not have full column rank.
class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition_estimate() const { return condition_; }

 private:
  double condition_;
};

/// An iterative procedure hit its iteration cap.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Plasma glucose reached a non-positive value in the surrogate patient.
class SimulatedDeathError : public Error {
 public:
  using Error::Error;
};

/// Divergence guard used by every rollout.
inline constexpr double kDivergenceLimit = 1e10;

inline bool all_finite_and_bounded(const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || std::abs(v[i]) > kDivergenceLimit) return false;
  }
  return true;
}

}  // namespace rlpi
