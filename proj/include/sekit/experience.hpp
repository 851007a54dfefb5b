// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experience functions f(t; theta): scoring rules over a finite domain, in
// extended reals. -inf marks a configuration the experience rules out; +inf
// and NaN are rejected at evaluation time.

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sekit/core.hpp"
#include "sekit/models.hpp"
#include "sekit/rng.hpp"

namespace sekit {

// ---------------------------------------------------------------------------
// Dataset

class Dataset {
 public:
  Dataset(std::size_t domain_size, std::vector<std::size_t> counts) : counts_(std::move(counts)) {
    require(counts_.size() == domain_size, ErrorCode::ShapeMismatch, "count vector does not match the domain");
    for (auto c : counts_) total_ += c;
    require(total_ >= 1, ErrorCode::EmptyDataset, "dataset has no observations");
  }

  static Dataset from_observations(std::size_t domain_size, std::span<const std::size_t> observations) {
    require(!observations.empty(), ErrorCode::EmptyDataset, "dataset has no observations");
    std::vector<std::size_t> counts(domain_size, 0);
    for (auto t : observations) {
      require(t < domain_size, ErrorCode::IndexOutOfRange, "observation outside the domain");
      ++counts[t];
    }
    return Dataset(domain_size, std::move(counts));
  }

  std::size_t size() const { return counts_.size(); }
  std::size_t total() const { return total_; }
  std::size_t count(std::size_t t) const { return counts_.at(t); }
  const std::vector<std::size_t>& counts() const { return counts_; }

  Dist empirical() const {
    Vec p(counts_.size());
    for (std::size_t t = 0; t < counts_.size(); ++t)
      p[t] = static_cast<double>(counts_[t]) / static_cast<double>(total_);
    return Dist::from_probs(std::move(p));
  }

 private:
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// ExperienceFn

class ExperienceFn {
 public:
  /// All configurations at once; theta is the current flat model parameter
  /// vector (empty for theta-independent experience).
  using Evaluator = std::function<Vec(std::span<const double> theta)>;
  /// d/dtheta E_q[f_theta] holding q fixed.
  using ExpectationGrad = std::function<Vec(const Dist& q, std::span<const double> theta)>;

  ExperienceFn(std::size_t n, Evaluator eval, bool theta_dependent = false, ExpectationGrad grad = {})
      : n_(n), eval_(std::move(eval)), theta_dependent_(theta_dependent), grad_(std::move(grad)) {
    require(n_ >= 1, ErrorCode::InvalidArgument, "experience domain must be non-empty");
    require(static_cast<bool>(eval_), ErrorCode::InvalidArgument, "experience needs an evaluator");
  }

  static ExperienceFn from_values(Vec values) {
    auto shared = std::make_shared<const Vec>(std::move(values));
    const std::size_t n = shared->size();
    return ExperienceFn(n, [shared](std::span<const double>) { return *shared; });
  }

  static ExperienceFn constant(std::size_t n, double c) { return from_values(Vec(n, c)); }

  std::size_t size() const { return n_; }
  bool theta_dependent() const { return theta_dependent_; }
  bool has_expectation_grad() const { return static_cast<bool>(grad_); }

  Vec evaluate(std::span<const double> theta = {}) const {
    Vec v = eval_(theta);
    require(v.size() == n_, ErrorCode::ShapeMismatch, "experience evaluator returned the wrong length");
    for (double x : v)
      require(!std::isnan(x) && x != kInf, ErrorCode::InvalidArgument, "experience values must be < +inf and not NaN");
    return v;
  }

  double operator()(std::size_t t, std::span<const double> theta = {}) const {
    require(t < n_, ErrorCode::IndexOutOfRange, "configuration index out of range");
    return evaluate(theta)[t];
  }

  Vec expectation_grad(const Dist& q, std::span<const double> theta) const {
    require(has_expectation_grad(), ErrorCode::ModeUnsupported, "experience has no parameter gradient");
    return grad_(q, theta);
  }

 private:
  std::size_t n_;
  Evaluator eval_;
  bool theta_dependent_;
  ExpectationGrad grad_;
};

// ---------------------------------------------------------------------------
// Data-instance experience

/// f(t) = log(m(t) / N).
inline ExperienceFn f_data(const Dataset& data) {
  const Dist emp = data.empirical();
  return ExperienceFn::from_values(emp.logs());
}

/// Observed-only data lifted to X x Y: f(x, y) = log(m(x) / N) for every y.
inline ExperienceFn f_data_unsupervised(const Dataset& data, std::size_t ny) {
  require(ny >= 1, ErrorCode::InvalidArgument, "latent space must be non-empty");
  const Dist emp = data.empirical();
  Vec f(data.size() * ny);
  for (std::size_t x = 0; x < data.size(); ++x)
    for (std::size_t y = 0; y < ny; ++y) f[x * ny + y] = emp.log(x);
  return ExperienceFn::from_values(std::move(f));
}

/// Maps an observation to an (x, y) pair; deterministic splits ignore the rng.
using SplitFn = std::function<std::pair<std::size_t, std::size_t>(std::size_t t, Xoshiro256& rng)>;

/// f(x, y) = log of the empirical frequency of split outputs. Each occurrence
/// of each observation is split once, in index order, from one seeded stream.
inline ExperienceFn f_data_self(const Dataset& data, const SplitFn& split, std::size_t nx, std::size_t ny,
                                std::uint64_t seed = 0) {
  Xoshiro256 rng(seed);
  Vec counts(nx * ny, 0.0);
  for (std::size_t t = 0; t < data.size(); ++t) {
    for (std::size_t c = 0; c < data.count(t); ++c) {
      const auto [x, y] = split(t, rng);
      require(x < nx && y < ny, ErrorCode::SplitOutOfRange, "split produced an out-of-range pair");
      counts[x * ny + y] += 1.0;
    }
  }
  Vec f(nx * ny);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = safe_log(counts[i] / static_cast<double>(data.total()));
  return ExperienceFn::from_values(std::move(f));
}

/// f(t) = log(m(t) w(t) / N).
inline ExperienceFn f_data_weighted(const Dataset& data, std::span<const double> weights) {
  require(weights.size() == data.size(), ErrorCode::ShapeMismatch, "weight vector does not match the domain");
  double mass = 0.0;
  Vec f(data.size());
  for (std::size_t t = 0; t < data.size(); ++t) {
    require(std::isfinite(weights[t]) && weights[t] >= 0.0, ErrorCode::InvalidArgument, "weights must be >= 0");
    const double v = static_cast<double>(data.count(t)) * weights[t] / static_cast<double>(data.total());
    mass += v;
    f[t] = safe_log(v);
  }
  require(mass > 0.0, ErrorCode::AllZeroWeights, "weights vanish on the data support");
  return ExperienceFn::from_values(std::move(f));
}

/// f(t) = log E_{t* ~ data}[a_{t*}(t)]; kernel is row-major, row t* holds a_{t*}(.).
inline ExperienceFn f_data_augmented(const Dataset& data, std::span<const double> kernel) {
  const std::size_t n = data.size();
  require(kernel.size() == n * n, ErrorCode::ShapeMismatch, "kernel must be |T| x |T|");
  Vec expected(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    if (data.count(s) == 0) continue;
    double row_mass = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = kernel[s * n + t];
      require(std::isfinite(a) && a >= 0.0, ErrorCode::DegenerateKernel, "kernel entries must be finite and >= 0");
      row_mass += a;
    }
    require(row_mass > 0.0, ErrorCode::DegenerateKernel, "kernel row of an observed configuration is all zero");
    const double w = static_cast<double>(data.count(s)) / static_cast<double>(data.total());
    for (std::size_t t = 0; t < n; ++t) expected[t] += w * kernel[s * n + t];
  }
  Vec f(n);
  for (std::size_t t = 0; t < n; ++t) f[t] = safe_log(expected[t]);
  return ExperienceFn::from_values(std::move(f));
}

/// Row-normalized exponentiated-payoff kernel a_{t*}(t) ∝ exp{R(t, t*) / temperature}.
inline Vec payoff_kernel(std::size_t n, const std::function<double(std::size_t t, std::size_t t_star)>& reward,
                         double temperature = 1.0) {
  require(temperature > 0.0, ErrorCode::InvalidArgument, "temperature must be > 0");
  Vec kernel(n * n);
  Vec scores(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) scores[t] = reward(t, s) / temperature;
    const Dist row = normalize_log(scores);
    for (std::size_t t = 0; t < n; ++t) kernel[s * n + t] = row[t];
  }
  return kernel;
}

// ---------------------------------------------------------------------------
// Active supervision

using LabelOracle = std::function<std::size_t(std::size_t x, Xoshiro256& rng)>;

struct ActiveOptions {
  double lambda = 1.0;
  /// Rescale u to [0, 1] over the pool support before weighting.
  bool normalize_u = false;
  std::uint64_t seed = 0;
};

namespace detail {

inline Vec active_u(const Dataset& pool, std::span<const double> u, bool normalize) {
  Vec out(u.begin(), u.end());
  if (!normalize) return out;
  double lo = kInf, hi = kNegInf;
  for (std::size_t x = 0; x < pool.size(); ++x)
    if (pool.count(x) > 0) lo = std::min(lo, u[x]), hi = std::max(hi, u[x]);
  const double range = hi - lo;
  for (double& v : out) v = range > 0.0 ? (v - lo) / range : 0.0;
  return out;
}

}  // namespace detail

/// f(x, y) = log E_{x* ~ pool, y* = oracle(x*)}[1] + lambda * u(x).
inline ExperienceFn f_active(const Dataset& pool, const LabelOracle& oracle, std::span<const double> u,
                             std::size_t ny, const ActiveOptions& opts = {}) {
  require(pool.total() >= 1, ErrorCode::EmptyPool, "pool is empty");
  require(opts.lambda > 0.0, ErrorCode::InvalidArgument, "lambda must be > 0");
  require(u.size() == pool.size(), ErrorCode::ShapeMismatch, "informativeness must cover the pool domain");
  const std::size_t nx = pool.size();
  const Vec uu = detail::active_u(pool, u, opts.normalize_u);
  Xoshiro256 rng(opts.seed);
  Vec counts(nx * ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t c = 0; c < pool.count(x); ++c) {
      const std::size_t y = oracle(x, rng);
      require(y < ny, ErrorCode::IndexOutOfRange, "oracle label out of range");
      counts[x * ny + y] += 1.0;
    }
  }
  Vec f(nx * ny);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      const double base = safe_log(counts[x * ny + y] / static_cast<double>(pool.total()));
      f[x * ny + y] = base == kNegInf ? kNegInf : base + opts.lambda * uu[x];
    }
  return ExperienceFn::from_values(std::move(f));
}

/// Selection distribution over the pool, proportional to empirical(x) exp{lambda u(x)}.
/// lambda = +inf is the zero-temperature limit: the lowest-index most
/// informative pool point.
inline Dist active_selection(const Dataset& pool, std::span<const double> u, double lambda, bool normalize_u = false) {
  require(pool.total() >= 1, ErrorCode::EmptyPool, "pool is empty");
  require(lambda > 0.0, ErrorCode::InvalidArgument, "lambda must be > 0");
  require(u.size() == pool.size(), ErrorCode::ShapeMismatch, "informativeness must cover the pool domain");
  const Vec uu = detail::active_u(pool, u, normalize_u);
  if (std::isinf(lambda)) {
    std::size_t best = pool.size();
    for (std::size_t x = 0; x < pool.size(); ++x)
      if (pool.count(x) > 0 && (best == pool.size() || uu[x] > uu[best])) best = x;
    return Dist::point_mass(pool.size(), best);
  }
  const Dist emp = pool.empirical();
  Vec scores(pool.size());
  for (std::size_t x = 0; x < pool.size(); ++x)
    scores[x] = emp.log(x) == kNegInf ? kNegInf : emp.log(x) + lambda * uu[x];
  return normalize_log(scores);
}

// ---------------------------------------------------------------------------
// Soft logic

struct SoftLogicExpr {
  enum class Kind { Atom, StrongAnd, Or, Avg, Not, Implies };

  Kind kind = Kind::Atom;
  std::string name;                     // atoms only
  std::shared_ptr<const Vec> values;    // atoms only: truth value per configuration
  std::vector<SoftLogicExpr> children;

  static SoftLogicExpr atom(std::string name, Vec values) {
    SoftLogicExpr e;
    e.name = std::move(name);
    e.values = std::make_shared<const Vec>(std::move(values));
    return e;
  }
  static SoftLogicExpr strong_and(SoftLogicExpr a, SoftLogicExpr b) { return node(Kind::StrongAnd, {std::move(a), std::move(b)}); }
  static SoftLogicExpr lor(SoftLogicExpr a, SoftLogicExpr b) { return node(Kind::Or, {std::move(a), std::move(b)}); }
  static SoftLogicExpr avg(std::vector<SoftLogicExpr> xs) {
    require(!xs.empty(), ErrorCode::InvalidArgument, "averaging conjunction needs at least one operand");
    return node(Kind::Avg, std::move(xs));
  }
  static SoftLogicExpr lnot(SoftLogicExpr a) { return node(Kind::Not, {std::move(a)}); }
  static SoftLogicExpr implies(SoftLogicExpr a, SoftLogicExpr b) { return node(Kind::Implies, {std::move(a), std::move(b)}); }

 private:
  static SoftLogicExpr node(Kind k, std::vector<SoftLogicExpr> xs) {
    SoftLogicExpr e;
    e.kind = k;
    e.children = std::move(xs);
    return e;
  }
};

/// A & B = max(A+B-1, 0); A v B = min(A+B, 1); avg = mean; not A = 1-A;
/// A => B reads as (not A) v B.
inline double eval_soft_logic(const SoftLogicExpr& e, std::size_t t) {
  using K = SoftLogicExpr::Kind;
  switch (e.kind) {
    case K::Atom: {
      require(e.values && t < e.values->size(), ErrorCode::IndexOutOfRange, "atom '" + e.name + "' has no value here");
      const double v = (*e.values)[t];
      require(v >= 0.0 && v <= 1.0, ErrorCode::AtomOutOfRange, "atom '" + e.name + "' outside [0, 1]");
      return v;
    }
    case K::StrongAnd:
      return std::max(eval_soft_logic(e.children[0], t) + eval_soft_logic(e.children[1], t) - 1.0, 0.0);
    case K::Or:
      return std::min(eval_soft_logic(e.children[0], t) + eval_soft_logic(e.children[1], t), 1.0);
    case K::Avg: {
      double acc = 0.0;
      for (const auto& c : e.children) acc += eval_soft_logic(c, t);
      return acc / static_cast<double>(e.children.size());
    }
    case K::Not:
      return 1.0 - eval_soft_logic(e.children[0], t);
    case K::Implies:
      return std::min(1.0 - eval_soft_logic(e.children[0], t) + eval_soft_logic(e.children[1], t), 1.0);
  }
  return 0.0;
}

inline ExperienceFn f_rule(const SoftLogicExpr& expr, std::size_t n) {
  Vec f(n);
  for (std::size_t t = 0; t < n; ++t) f[t] = eval_soft_logic(expr, t);
  return ExperienceFn::from_values(std::move(f));
}

// ---------------------------------------------------------------------------
// Model-based experience

/// f(x, y) = log(empirical(x) * p_source(y|x)).
inline ExperienceFn f_model_mimic(const Dataset& inputs, const ConditionalSoftmaxModel& source) {
  require(inputs.size() == source.nx, ErrorCode::DomainMismatch, "source model input space differs from the data");
  const Dist emp = inputs.empirical();
  Vec f(source.nx * source.ny);
  for (std::size_t x = 0; x < source.nx; ++x) {
    const Dist row = source.row(x);
    for (std::size_t y = 0; y < source.ny; ++y) {
      const double a = emp.log(x), b = row.log(y);
      f[x * source.ny + y] = (a == kNegInf || b == kNegInf) ? kNegInf : a + b;
    }
  }
  return ExperienceFn::from_values(std::move(f));
}

/// f(x, y) = log p_source(y|x).
inline ExperienceFn f_model_score(const ConditionalSoftmaxModel& source) {
  Vec f(source.nx * source.ny);
  for (std::size_t x = 0; x < source.nx; ++x) {
    const Dist row = source.row(x);
    for (std::size_t y = 0; y < source.ny; ++y) f[x * source.ny + y] = row.log(y);
  }
  return ExperienceFn::from_values(std::move(f));
}

// ---------------------------------------------------------------------------
// Combination

struct WeightedExperience {
  double lambda = 1.0;
  ExperienceFn f;
};

/// f = sum_i lambda_i f_i; any -inf term makes the sum -inf.
inline ExperienceFn combine(const std::vector<WeightedExperience>& terms) {
  require(!terms.empty(), ErrorCode::EmptyCombination, "nothing to combine");
  const std::size_t n = terms.front().f.size();
  bool dependent = false, all_grad = true;
  for (const auto& term : terms) {
    require(term.lambda > 0.0 && std::isfinite(term.lambda), ErrorCode::InvalidArgument, "combination weights must be > 0");
    require(term.f.size() == n, ErrorCode::DomainMismatch, "combined experiences live on different domains");
    dependent = dependent || term.f.theta_dependent();
    if (term.f.theta_dependent() && !term.f.has_expectation_grad()) all_grad = false;
  }
  auto shared = std::make_shared<const std::vector<WeightedExperience>>(terms);
  auto eval = [shared, n](std::span<const double> theta) {
    Vec acc(n, 0.0);
    for (const auto& term : *shared) {
      const Vec v = term.f.evaluate(theta);
      for (std::size_t t = 0; t < n; ++t)
        acc[t] = (acc[t] == kNegInf || v[t] == kNegInf) ? kNegInf : acc[t] + term.lambda * v[t];
    }
    return acc;
  };
  ExperienceFn::ExpectationGrad grad;
  if (dependent && all_grad) {
    grad = [shared](const Dist& q, std::span<const double> theta) {
      Vec g(theta.size(), 0.0);
      for (const auto& term : *shared) {
        if (!term.f.theta_dependent()) continue;
        const Vec gi = term.f.expectation_grad(q, theta);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += term.lambda * gi[i];
      }
      return g;
    };
  }
  return ExperienceFn(n, std::move(eval), dependent, std::move(grad));
}

}  // namespace sekit
