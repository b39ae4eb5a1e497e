#include "rlpi/qmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace rlpi::qmodel {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view s, std::string_view context) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("bad integer '{}' in basis spec '{}'", s, context));
  }
  return v;
}

Exponents parse_monomial(std::string_view token, int n, int n_r, int m) {
  Exponents e(n + n_r + m, 0);
  const std::string_view whole = token;
  while (!token.empty()) {
    const auto star = token.find('*');
    std::string_view factor = trim(token.substr(0, star));
    token = star == std::string_view::npos ? std::string_view{} : token.substr(star + 1);
    if (factor.size() < 2) throw ConfigError(fmt::format("bad factor in '{}'", whole));
    int power = 1;
    if (const auto caret = factor.find('^'); caret != std::string_view::npos) {
      power = parse_int(factor.substr(caret + 1), whole);
      factor = factor.substr(0, caret);
    }
    const char kind = factor.front();
    const int idx = parse_int(factor.substr(1), whole) - 1;
    int offset = 0;
    int limit = 0;
    switch (kind) {
      case 'x': offset = 0; limit = n; break;
      case 'r': offset = n; limit = n_r; break;
      case 'a': offset = n + n_r; limit = m; break;
      default: throw ConfigError(fmt::format("unknown variable '{}' in '{}'", factor, whole));
    }
    if (idx < 0 || idx >= limit || power < 1) {
      throw ConfigError(fmt::format("variable '{}' out of range in '{}'", factor, whole));
    }
    e[offset + idx] += power;
  }
  return e;
}

std::string monomial_text(const Exponents& e, int n, int n_r) {
  std::string out;
  for (std::size_t v = 0; v < e.size(); ++v) {
    if (e[v] == 0) continue;
    const int iv = static_cast<int>(v);
    char kind = 'a';
    int idx = iv - n - n_r;
    if (iv < n) {
      kind = 'x';
      idx = iv;
    } else if (iv < n + n_r) {
      kind = 'r';
      idx = iv - n;
    }
    if (!out.empty()) out += '*';
    out += fmt::format("{}{}", kind, idx + 1);
    if (e[v] > 1) out += fmt::format("^{}", e[v]);
  }
  return out.empty() ? "1" : out;
}

// Concatenate (x, r, a) into the variable vector v.
Vec stack(const BasisDescriptor& b, const StateRefAction& p) {
  if (p.x.size() != b.n() || p.r.size() != b.n_r() || p.a.size() != b.m()) {
    throw PreconditionError(fmt::format(
        "dimension mismatch: basis expects (n={}, n_r={}, m={}), got ({}, {}, {})", b.n(),
        b.n_r(), b.m(), p.x.size(), p.r.size(), p.a.size()));
  }
  Vec v(b.variable_count());
  v << p.x, p.r, p.a;
  return v;
}

double ipow(double base, int e) {
  double out = 1.0;
  for (int i = 0; i < e; ++i) out *= base;
  return out;
}

double monomial(const Exponents& e, const Vec& v) {
  double out = 1.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (e[k] != 0) out *= ipow(v[static_cast<Eigen::Index>(k)], e[k]);
  }
  return out;
}

}  // namespace

BasisDescriptor::BasisDescriptor(int n, int n_r, int m, std::string_view z_spec)
    : n_(n), n_r_(n_r), m_(m) {
  if (n <= 0 || n_r < 0 || m <= 0) throw ConfigError("basis dimensions must be positive");
  std::string_view rest = z_spec;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view token = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (token.empty()) continue;
    z_.push_back(parse_monomial(token, n, n_r, m));
  }
  if (z_.empty()) throw ConfigError("basis z vector is empty");
  build();
}

void BasisDescriptor::build() {
  const int nz = z_size();
  z_action_.assign(nz, -1);
  for (int i = 0; i < nz; ++i) {
    int action_degree = 0;
    int other_degree = 0;
    int action_var = -1;
    for (int v = 0; v < variable_count(); ++v) {
      if (v >= n_ + n_r_) {
        action_degree += z_[i][v];
        if (z_[i][v] > 0) action_var = v - n_ - n_r_;
      } else {
        other_degree += z_[i][v];
      }
    }
    if (action_degree > 0) {
      if (action_degree != 1 || other_degree != 0) {
        throw ConfigError(fmt::format(
            "z entry '{}' must be a bare action variable so that Q is quadratic in a",
            monomial_text(z_[i], n_, n_r_)));
      }
      z_action_[i] = action_var;
    }
  }
  features_.clear();
  pairs_.clear();
  for (int i = 0; i < nz; ++i) {
    for (int j = i; j < nz; ++j) {
      Exponents e(variable_count());
      for (int v = 0; v < variable_count(); ++v) e[v] = z_[i][v] + z_[j][v];
      if (std::find(features_.begin(), features_.end(), e) != features_.end()) {
        throw ConfigError(fmt::format("feature '{}' appears twice; basis is not independent",
                                      monomial_text(e, n_, n_r_)));
      }
      features_.push_back(std::move(e));
      pairs_.emplace_back(i, j);
    }
  }
}

BasisDescriptor BasisDescriptor::glucose_paper() {
  return BasisDescriptor(2, 1, 1, "x1,x2,x1^2,x2^2,r1,r1^2,a1");
}

BasisDescriptor BasisDescriptor::linear(int n, int n_r, int m) {
  std::string spec;
  for (int i = 1; i <= n; ++i) spec += fmt::format("x{},", i);
  for (int i = 1; i <= n_r; ++i) spec += fmt::format("r{},", i);
  for (int i = 1; i <= m; ++i) spec += fmt::format("a{},", i);
  return BasisDescriptor(n, n_r, m, spec);
}

BasisDescriptor BasisDescriptor::augmented(int n, int n_r, int m) {
  std::string spec;
  for (int i = 1; i <= n; ++i) spec += fmt::format("x{},", i);
  for (int i = 1; i <= n; ++i) spec += fmt::format("x{}^2,", i);
  for (int i = 1; i <= n_r; ++i) spec += fmt::format("r{},", i);
  for (int i = 1; i <= n_r; ++i) spec += fmt::format("r{}^2,", i);
  for (int i = 1; i <= m; ++i) spec += fmt::format("a{},", i);
  return BasisDescriptor(n, n_r, m, spec);
}

BasisDescriptor BasisDescriptor::state_action(int n, int n_r, int m) {
  std::string spec;
  for (int i = 1; i <= n; ++i) spec += fmt::format("x{},", i);
  for (int i = 1; i <= n; ++i) spec += fmt::format("x{}^2,", i);
  for (int i = 1; i <= m; ++i) spec += fmt::format("a{},", i);
  return BasisDescriptor(n, n_r, m, spec);
}

std::string BasisDescriptor::z_spec() const {
  std::string out;
  for (const auto& e : z_) {
    if (!out.empty()) out += ',';
    out += monomial_text(e, n_, n_r_);
  }
  return out;
}

std::string BasisDescriptor::feature_name(int k) const {
  const auto [i, j] = pairs_.at(k);
  return fmt::format("{}*{}", monomial_text(z_[i], n_, n_r_), monomial_text(z_[j], n_, n_r_));
}

std::uint64_t BasisDescriptor::hash() const {
  const std::string key = fmt::format("{};{};{};{}", n_, n_r_, m_, z_spec());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int BasisDescriptor::find_feature(const Exponents& e) const {
  const auto it = std::find(features_.begin(), features_.end(), e);
  return it == features_.end() ? -1 : static_cast<int>(it - features_.begin());
}

bool BasisDescriptor::operator==(const BasisDescriptor& other) const {
  return n_ == other.n_ && n_r_ == other.n_r_ && m_ == other.m_ && z_ == other.z_;
}

QWeights make_weights(std::shared_ptr<const BasisDescriptor> basis, Vec w) {
  if (!basis) throw ConfigError("weights require a basis");
  if (w.size() != basis->K()) {
    throw ConfigError(fmt::format("weight vector has {} entries, basis has K = {}", w.size(),
                                  basis->K()));
  }
  if (!w.allFinite()) throw ConfigError("weights must be finite");
  return QWeights{std::move(basis), std::move(w)};
}

Vec basis_eval(const BasisDescriptor& basis, const StateRefAction& p) {
  const Vec v = stack(basis, p);
  const int nz = basis.z_size();
  Vec zv(nz);
  for (int i = 0; i < nz; ++i) zv[i] = monomial(basis.z()[i], v);
  Vec phi(basis.K());
  for (int k = 0; k < basis.K(); ++k) {
    const auto [i, j] = basis.feature_pair(k);
    phi[k] = zv[i] * zv[j];
  }
  return phi;
}

double q_eval(const QWeights& w, const StateRefAction& p) {
  return basis_eval(*w.basis, p).dot(w.w);
}

Vec q_grad_x(const QWeights& w, const StateRefAction& p) {
  const BasisDescriptor& b = *w.basis;
  const Vec v = stack(b, p);
  Vec g = Vec::Zero(b.n());
  for (int k = 0; k < b.K(); ++k) {
    const double wk = w.w[k];
    if (wk == 0.0) continue;
    Exponents e = b.features()[k];
    for (int i = 0; i < b.n(); ++i) {
      const int ei = e[i];
      if (ei == 0) continue;
      e[i] = ei - 1;
      g[i] += wk * ei * monomial(e, v);
      e[i] = ei;
    }
  }
  return g;
}

Mat q_hess_x(const QWeights& w, const StateRefAction& p) {
  const BasisDescriptor& b = *w.basis;
  const Vec v = stack(b, p);
  const int n = b.n();
  Mat H = Mat::Zero(n, n);
  for (int k = 0; k < b.K(); ++k) {
    const double wk = w.w[k];
    if (wk == 0.0) continue;
    Exponents e = b.features()[k];
    for (int i = 0; i < n; ++i) {
      const int ei = e[i];
      if (ei == 0) continue;
      if (ei >= 2) {
        e[i] = ei - 2;
        H(i, i) += wk * ei * (ei - 1) * monomial(e, v);
        e[i] = ei;
      }
      for (int j = i + 1; j < n; ++j) {
        const int ej = e[j];
        if (ej == 0) continue;
        e[i] = ei - 1;
        e[j] = ej - 1;
        const double val = wk * ei * ej * monomial(e, v);
        e[i] = ei;
        e[j] = ej;
        H(i, j) += val;
        H(j, i) += val;
      }
    }
  }
  return H;
}

ActionQuadratic action_quadratic(const QWeights& w, const Vec& x, const Vec& r) {
  const BasisDescriptor& b = *w.basis;
  const int m = b.m();
  StateRefAction p{x, r, Vec::Zero(m)};
  const Vec v = stack(b, p);
  const int nz = b.z_size();
  Vec zv(nz);
  for (int i = 0; i < nz; ++i) zv[i] = b.z_action_index(i) >= 0 ? 0.0 : monomial(b.z()[i], v);

  ActionQuadratic q{Mat::Zero(m, m), Vec::Zero(m), 0.0};
  for (int k = 0; k < b.K(); ++k) {
    const double wk = w.w[k];
    if (wk == 0.0) continue;
    const auto [i, j] = b.feature_pair(k);
    const int ai = b.z_action_index(i);
    const int aj = b.z_action_index(j);
    if (ai >= 0 && aj >= 0) {
      if (ai == aj) {
        q.c2(ai, ai) += wk;
      } else {
        q.c2(ai, aj) += 0.5 * wk;
        q.c2(aj, ai) += 0.5 * wk;
      }
    } else if (ai >= 0) {
      q.c1[ai] += wk * zv[j];
    } else if (aj >= 0) {
      q.c1[aj] += wk * zv[i];
    } else {
      q.c0 += wk * zv[i] * zv[j];
    }
  }
  return q;
}

namespace {

Vec best_corner(const ActionQuadratic& q, const ActionBounds& bounds) {
  const int m = static_cast<int>(q.c1.size());
  Vec best = bounds.lo;
  double best_val = q.value(best);
  const long corners = 1L << m;
  for (long mask = 1; mask < corners; ++mask) {
    Vec a(m);
    for (int k = 0; k < m; ++k) a[k] = (mask >> k) & 1 ? bounds.hi[k] : bounds.lo[k];
    const double val = q.value(a);
    if (val < best_val) {
      best_val = val;
      best = a;
    }
  }
  return best;
}

}  // namespace

Improvement policy_improve(const QWeights& w, const Vec& x, const Vec& r,
                           const ActionBounds& bounds) {
  const ActionQuadratic q = action_quadratic(w, x, r);
  const int m = static_cast<int>(q.c1.size());
  if (bounds.dim() != m) throw PreconditionError("policy_improve: bounds dimension mismatch");

  if (m == 1) {
    const double c2 = q.c2(0, 0);
    const double c1 = q.c1[0];
    if (c2 > 0.0) {
      Vec a(1);
      a[0] = std::clamp(-c1 / (2.0 * c2), bounds.lo[0], bounds.hi[0]);
      return {a, false};
    }
    return {best_corner(q, bounds), true};
  }

  Eigen::LLT<Mat> llt(q.c2);
  if (llt.info() != Eigen::Success) return {best_corner(q, bounds), true};
  Vec a = bounds.clamp(llt.solve(-0.5 * q.c1));
  // Projected coordinate descent: exact minimizer of a strictly convex
  // quadratic over a box.
  for (int sweep = 0; sweep < 500; ++sweep) {
    double moved = 0.0;
    for (int k = 0; k < m; ++k) {
      const double grad_rest = 2.0 * q.c2.row(k).dot(a) - 2.0 * q.c2(k, k) * a[k] + q.c1[k];
      const double ak = std::clamp(-grad_rest / (2.0 * q.c2(k, k)), bounds.lo[k], bounds.hi[k]);
      moved = std::max(moved, std::abs(ak - a[k]));
      a[k] = ak;
    }
    if (moved <= 1e-15 * (1.0 + a.lpNorm<Eigen::Infinity>())) break;
  }
  return {a, false};
}

Policy greedy_policy(const QWeights& w, const ActionBounds& bounds) {
  return [w, bounds](const Vec& x, const Vec& r) -> Vec {
    return policy_improve(w, x, r, bounds).a;
  };
}

QWeights init_q0(std::shared_ptr<const BasisDescriptor> basis, const InitConfig& config) {
  if (!(config.c_base > 0.0) || !(config.action_ratio > 0.0)) {
    throw ConfigError("init_q0: c_base and action_ratio must be positive");
  }
  Vec w = Vec::Zero(basis->K());
  for (int k = 0; k < basis->K(); ++k) {
    const auto [i, j] = basis->feature_pair(k);
    if (i != j) continue;
    w[k] = basis->z_action_index(i) >= 0 ? config.action_ratio * config.c_base : config.c_base;
  }
  return make_weights(std::move(basis), std::move(w));
}

std::string weights_to_json(const QWeights& w) {
  const BasisDescriptor& b = *w.basis;
  nlohmann::ordered_json j;
  j["format"] = "rlpi.qweights/1";
  j["basis"] = {{"n", b.n()},
                {"n_r", b.n_r()},
                {"m", b.m()},
                {"z", b.z_spec()},
                {"hash", fmt::format("{:016x}", b.hash())},
                {"K", b.K()},
                {"feature_order", "upper-triangle pairs z_i*z_j, i <= j, row-major"}};
  std::vector<std::string> names;
  for (int k = 0; k < b.K(); ++k) names.push_back(b.feature_name(k));
  j["features"] = names;
  j["w"] = std::vector<double>(w.w.data(), w.w.data() + w.w.size());
  return j.dump(2);
}

QWeights weights_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("weights JSON: {}", e.what()));
  }
  if (j.value("format", "") != "rlpi.qweights/1") throw ConfigError("weights JSON: unknown format");
  const auto& jb = j.at("basis");
  auto basis = std::make_shared<const BasisDescriptor>(
      jb.at("n").get<int>(), jb.at("n_r").get<int>(), jb.at("m").get<int>(),
      jb.at("z").get<std::string>());
  if (jb.contains("hash") && jb.at("hash").get<std::string>() != fmt::format("{:016x}", basis->hash())) {
    throw ConfigError("weights JSON: basis hash mismatch");
  }
  const auto values = j.at("w").get<std::vector<double>>();
  return make_weights(std::move(basis), Eigen::Map<const Vec>(values.data(), values.size()));
}

}  // namespace rlpi::qmodel
