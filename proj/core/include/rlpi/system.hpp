#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rlpi/common.hpp"
#include "rlpi/rng.hpp"

namespace rlpi {

/// Box constraints on the action, one interval per action dimension.
struct ActionBounds {
  Vec lo;
  Vec hi;

  static ActionBounds box(int m, double lo, double hi);
  int dim() const { return static_cast<int>(lo.size()); }
  Vec clamp(const Vec& a) const;
  bool contains(const Vec& a, double slack = 0.0) const;
};

/// Known bound Δ(x) on the model uncertainty, optionally paired with a concrete
/// disturbance d(x) for synthetic environments.
class UncertaintySpec {
 public:
  using BoundFn = std::function<double(const Vec&)>;
  using DisturbanceFn = std::function<Vec(const Vec&)>;

  UncertaintySpec();  // Δ ≡ 0, no realization
  UncertaintySpec(std::string name, BoundFn bound, DisturbanceFn realization = {});

  /// Δ(x) = sqrt(scale · xᵀx).
  static UncertaintySpec quadratic(double scale);
  static UncertaintySpec none() { return {}; }

  /// Same bound, with d(x) = fraction · Δ(x) · x / ‖x‖ (zero at the origin).
  UncertaintySpec with_aligned_realization(double fraction) const;
  UncertaintySpec with_realization(DisturbanceFn d, std::string tag) const;

  const std::string& name() const { return name_; }
  double raw_bound(const Vec& x) const { return bound_(x); }
  bool has_realization() const { return static_cast<bool>(realization_); }
  Vec disturbance(const Vec& x) const;

 private:
  std::string name_;
  BoundFn bound_;
  DisturbanceFn realization_;
};

/// Δ(x), validated: a negative or NaN value is a configuration error.
double uncertainty_bound(const UncertaintySpec& spec, const Vec& x);

/// Largest observed ‖d(x)‖ − Δ(x) over `samples` states drawn uniformly from
/// the box [-radius, radius]^n. Non-positive means the bound held everywhere.
double max_bound_violation(const UncertaintySpec& spec, int n, double radius,
                           std::size_t samples, std::uint64_t seed);

/// The unknown nominal map f(x, a).
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vec nominal(const Vec& x, const Vec& a) const = 0;
};

enum class StepMode { kNominal, kUncertain };

/// f plus uncertainty plus the mode that decides whether d(x) is applied.
class Environment {
 public:
  Environment(std::shared_ptr<const Dynamics> dynamics, UncertaintySpec uncertainty,
              StepMode mode = StepMode::kNominal);

  int state_dim() const { return dynamics_->state_dim(); }
  int action_dim() const { return dynamics_->action_dim(); }
  StepMode mode() const { return mode_; }
  const UncertaintySpec& uncertainty() const { return uncertainty_; }
  const Dynamics& dynamics() const { return *dynamics_; }

  Environment with_mode(StepMode mode) const;
  Environment with_uncertainty(UncertaintySpec uncertainty) const;

 private:
  std::shared_ptr<const Dynamics> dynamics_;
  UncertaintySpec uncertainty_;
  StepMode mode_;
};

/// One step of the environment: f(x,a) in nominal mode, f(x,a)+d(x) otherwise.
/// Throws DivergenceError when the successor leaves the divergence guard.
Vec env_step(const Environment& env, const Vec& x, const Vec& a);

/// Autonomous reference generator r' = h(r).
class Exosystem {
 public:
  using Map = std::function<Vec(const Vec&)>;

  Exosystem(int dim, Map h, std::string name);
  static Exosystem constant(int dim);
  static Exosystem linear(const Mat& H);

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  Vec step(const Vec& r) const { return h_(r); }

 private:
  int dim_;
  Map h_;
  std::string name_;
};

Vec reference_step(const Exosystem& exo, const Vec& r);

using Policy = std::function<Vec(const Vec& x, const Vec& r)>;

struct Transition {
  Vec x;
  Vec r;
  Vec a;
  Vec x_next;
  Vec r_next;
  Vec a_next_policy;
};

struct TransitionBuffer {
  std::vector<Transition> entries;
  int iteration = 0;

  std::size_t size() const { return entries.size(); }
  const Transition& operator[](std::size_t i) const { return entries[i]; }
};

/// Columnar CSV, one transition per row:
/// x1..xn, r1..rn, a1..am, x1'..xn', r1'..rn', apol1..apolm.
void write_buffer_csv(std::ostream& os, const TransitionBuffer& buffer);

/// Uniform additive exploration noise range (applied per action dimension).
struct ExplorationNoise {
  double lo = 3e-4;
  double hi = 6e-4;
};

/// i = 0: μ⁰(x,r) + n; i > 0: (μⁱ(x,r) + μⁱ⁻¹(x,r))/2 + n; clamped to bounds.
Vec exploration_action(int iteration, const Policy& policy, const Policy* previous,
                       const Vec& x, const Vec& r, CounterRng& rng,
                       const ExplorationNoise& noise, const ActionBounds& bounds);

/// A stateful data source: an episode of the nominal system together with its
/// reference trajectory. Episodes end; transitions never straddle a reset.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual int state_dim() const = 0;
  virtual int reference_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vec state() const = 0;
  virtual Vec reference() const = 0;
  /// Applies the action for one step. May throw DivergenceError.
  virtual void advance(const Vec& a) = 0;
  virtual bool episode_done() const = 0;
  /// Starts the next episode.
  virtual void reset() = 0;
};

/// Plant built from an Environment and an Exosystem with seeded random
/// initial conditions and a fixed episode length.
class SimulatedPlant : public Plant {
 public:
  struct InitialBox {
    double x_radius = 1.0;
    double r_radius = 1.0;
  };

  SimulatedPlant(Environment env, Exosystem exo, InitialBox box, std::size_t episode_length,
                 std::uint64_t seed);

  int state_dim() const override { return env_.state_dim(); }
  int reference_dim() const override { return exo_.dim(); }
  int action_dim() const override { return env_.action_dim(); }
  Vec state() const override { return x_; }
  Vec reference() const override { return r_; }
  void advance(const Vec& a) override;
  bool episode_done() const override { return step_ >= episode_length_; }
  void reset() override;

 private:
  Environment env_;
  Exosystem exo_;
  InitialBox box_;
  std::size_t episode_length_;
  CounterRng rng_;
  Vec x_;
  Vec r_;
  std::size_t step_ = 0;
};

using ActionSource = std::function<Vec(const Vec& x, const Vec& r)>;

/// Rolls the plant with `source` until exactly B transitions are gathered.
/// Each entry stores greedy(x', r'). Requires B ≥ feature_count.
TransitionBuffer collect_buffer(Plant& plant, const ActionSource& source, const Policy& greedy,
                                std::size_t B, std::size_t feature_count, int iteration = 0);

}  // namespace rlpi
