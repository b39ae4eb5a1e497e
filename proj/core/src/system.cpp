#include "rlpi/system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <utility>

#include <fmt/format.h>

namespace rlpi {

ActionBounds ActionBounds::box(int m, double lo, double hi) {
  if (m <= 0) throw ConfigError("action dimension must be positive");
  if (!(lo <= hi)) throw ConfigError(fmt::format("empty action box [{}, {}]", lo, hi));
  return {Vec::Constant(m, lo), Vec::Constant(m, hi)};
}

Vec ActionBounds::clamp(const Vec& a) const {
  return a.cwiseMax(lo).cwiseMin(hi);
}

bool ActionBounds::contains(const Vec& a, double slack) const {
  if (a.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < lo[i] - slack || a[i] > hi[i] + slack) return false;
  }
  return true;
}

UncertaintySpec::UncertaintySpec()
    : name_("none"), bound_([](const Vec&) { return 0.0; }) {}

UncertaintySpec::UncertaintySpec(std::string name, BoundFn bound, DisturbanceFn realization)
    : name_(std::move(name)), bound_(std::move(bound)), realization_(std::move(realization)) {
  if (!bound_) throw ConfigError("uncertainty bound function is empty");
}

UncertaintySpec UncertaintySpec::quadratic(double scale) {
  if (!(scale >= 0.0)) throw ConfigError("uncertainty scale must be non-negative");
  return UncertaintySpec(fmt::format("sqrt({}*x'x)", scale),
                         [scale](const Vec& x) { return std::sqrt(scale * x.squaredNorm()); });
}

UncertaintySpec UncertaintySpec::with_aligned_realization(double fraction) const {
  BoundFn bound = bound_;
  return with_realization(
      [bound, fraction](const Vec& x) -> Vec {
        const double nx = x.norm();
        if (nx == 0.0) return Vec::Zero(x.size());
        return (fraction * bound(x) / nx) * x;
      },
      fmt::format("aligned({})", fraction));
}

UncertaintySpec UncertaintySpec::with_realization(DisturbanceFn d, std::string tag) const {
  return UncertaintySpec(name_ + "+" + tag, bound_, std::move(d));
}

Vec UncertaintySpec::disturbance(const Vec& x) const {
  if (!realization_) return Vec::Zero(x.size());
  return realization_(x);
}

double uncertainty_bound(const UncertaintySpec& spec, const Vec& x) {
  const double v = spec.raw_bound(x);
  if (!(v >= 0.0)) {
    throw ConfigError(fmt::format("uncertainty bound '{}' returned {}", spec.name(), v));
  }
  return v;
}

double max_bound_violation(const UncertaintySpec& spec, int n, double radius,
                           std::size_t samples, std::uint64_t seed) {
  CounterRng rng(seed, 0xD157);
  double worst = -std::numeric_limits<double>::infinity();
  Vec x(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (int k = 0; k < n; ++k) x[k] = rng.uniform(-radius, radius);
    const double excess = spec.disturbance(x).norm() - uncertainty_bound(spec, x);
    worst = std::max(worst, excess);
  }
  return worst;
}

Environment::Environment(std::shared_ptr<const Dynamics> dynamics, UncertaintySpec uncertainty,
                         StepMode mode)
    : dynamics_(std::move(dynamics)), uncertainty_(std::move(uncertainty)), mode_(mode) {
  if (!dynamics_) throw ConfigError("environment requires dynamics");
}

Environment Environment::with_mode(StepMode mode) const {
  Environment e = *this;
  e.mode_ = mode;
  return e;
}

Environment Environment::with_uncertainty(UncertaintySpec uncertainty) const {
  Environment e = *this;
  e.uncertainty_ = std::move(uncertainty);
  return e;
}

Vec env_step(const Environment& env, const Vec& x, const Vec& a) {
  if (x.size() != env.state_dim() || a.size() != env.action_dim()) {
    throw PreconditionError("env_step: dimension mismatch");
  }
  Vec next = env.dynamics().nominal(x, a);
  if (env.mode() == StepMode::kUncertain) next += env.uncertainty().disturbance(x);
  if (!all_finite_and_bounded(next)) {
    throw DivergenceError("environment diverged: successor state is not finite or exceeds 1e10");
  }
  return next;
}

Exosystem::Exosystem(int dim, Map h, std::string name)
    : dim_(dim), h_(std::move(h)), name_(std::move(name)) {
  if (dim_ < 0 || !h_) throw ConfigError("invalid exosystem");
}

Exosystem Exosystem::constant(int dim) {
  return Exosystem(dim, [](const Vec& r) { return r; }, "constant");
}

Exosystem Exosystem::linear(const Mat& H) {
  if (H.rows() != H.cols()) throw ConfigError("exosystem matrix must be square");
  return Exosystem(static_cast<int>(H.rows()), [H](const Vec& r) -> Vec { return H * r; },
                   "linear");
}

Vec reference_step(const Exosystem& exo, const Vec& r) {
  if (r.size() != exo.dim()) throw PreconditionError("reference_step: dimension mismatch");
  return exo.step(r);
}

namespace {

void write_row(std::ostream& os, const Transition& t) {
  bool first = true;
  auto put = [&](const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!first) os << ',';
      os << fmt::format("{}", v[i]);
      first = false;
    }
  };
  put(t.x);
  put(t.r);
  put(t.a);
  put(t.x_next);
  put(t.r_next);
  put(t.a_next_policy);
  os << '\n';
}

}  // namespace

void write_buffer_csv(std::ostream& os, const TransitionBuffer& buffer) {
  if (buffer.entries.empty()) return;
  const auto& t0 = buffer.entries.front();
  std::vector<std::string> cols;
  auto names = [&](const char* prefix, Eigen::Index count, const char* suffix) {
    for (Eigen::Index i = 0; i < count; ++i) cols.push_back(fmt::format("{}{}{}", prefix, i + 1, suffix));
  };
  names("x", t0.x.size(), "");
  names("r", t0.r.size(), "");
  names("a", t0.a.size(), "");
  names("x", t0.x_next.size(), "'");
  names("r", t0.r_next.size(), "'");
  names("apol", t0.a_next_policy.size(), "");
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& t : buffer.entries) write_row(os, t);
}

Vec exploration_action(int iteration, const Policy& policy, const Policy* previous,
                       const Vec& x, const Vec& r, CounterRng& rng,
                       const ExplorationNoise& noise, const ActionBounds& bounds) {
  Vec a = policy(x, r);
  if (iteration > 0) {
    if (previous == nullptr || !*previous) {
      throw PreconditionError("exploration_action: previous policy required for i > 0");
    }
    a = 0.5 * (a + (*previous)(x, r));
  }
  for (Eigen::Index k = 0; k < a.size(); ++k) a[k] += rng.uniform(noise.lo, noise.hi);
  return bounds.clamp(a);
}

SimulatedPlant::SimulatedPlant(Environment env, Exosystem exo, InitialBox box,
                               std::size_t episode_length, std::uint64_t seed)
    : env_(std::move(env)),
      exo_(std::move(exo)),
      box_(box),
      episode_length_(episode_length),
      rng_(seed, 0x5EED) {
  if (episode_length_ == 0) throw ConfigError("episode length must be positive");
  reset();
}

void SimulatedPlant::advance(const Vec& a) {
  x_ = env_step(env_, x_, a);
  r_ = reference_step(exo_, r_);
  ++step_;
}

void SimulatedPlant::reset() {
  x_.resize(env_.state_dim());
  r_.resize(exo_.dim());
  for (Eigen::Index i = 0; i < x_.size(); ++i) x_[i] = rng_.uniform(-box_.x_radius, box_.x_radius);
  for (Eigen::Index i = 0; i < r_.size(); ++i) r_[i] = rng_.uniform(-box_.r_radius, box_.r_radius);
  step_ = 0;
}

TransitionBuffer collect_buffer(Plant& plant, const ActionSource& source, const Policy& greedy,
                                std::size_t B, std::size_t feature_count, int iteration) {
  if (B < feature_count) {
    throw PreconditionError(fmt::format(
        "collect_buffer: B = {} is smaller than the feature count K = {}", B, feature_count));
  }
  TransitionBuffer buffer;
  buffer.iteration = iteration;
  buffer.entries.reserve(B);
  while (buffer.entries.size() < B) {
    if (plant.episode_done()) plant.reset();
    Transition t;
    t.x = plant.state();
    t.r = plant.reference();
    t.a = source(t.x, t.r);
    try {
      plant.advance(t.a);
    } catch (const DivergenceError& e) {
      throw PartialBufferError(
          fmt::format("rollout diverged after {} transitions: {}", buffer.entries.size(), e.what()),
          buffer.entries.size());
    }
    t.x_next = plant.state();
    t.r_next = plant.reference();
    t.a_next_policy = greedy(t.x_next, t.r_next);
    buffer.entries.push_back(std::move(t));
  }
  return buffer;
}

}  // namespace rlpi
