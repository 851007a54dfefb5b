// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tabular softmax target models. Every family exposes the same free-function
// surface so the solver can treat them uniformly:
//
//   joint(m)                       p_theta over the (flattened) domain
//   params(m) / with_params(m, v)  flat logit vector
//   grad_expected_log_prob(m, q)   d/dtheta E_q[log p_theta]
//   exact_projection(m, q)         argmax_theta E_q[log p_theta], closed form
//   fit_to(m, q, steps, step)      the student step used by the solver
//
// Logits may be -inf (a configuration with zero mass); gradients never touch
// those coordinates because their probability is exactly zero.

#include <cmath>
#include <cstddef>
#include <variant>

#include "sekit/core.hpp"
#include "sekit/rng.hpp"

namespace sekit {

namespace detail {

inline Vec softmax(std::span<const double> logits) { return Dist::from_log_scores(logits).probs(); }

inline void check_finite_gradient(const Vec& g) {
  for (double v : g) require(std::isfinite(v), ErrorCode::NonFiniteGradient, "gradient has non-finite entries");
}

inline Vec random_logits(std::size_t n, Xoshiro256& rng, double scale) {
  Vec v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SoftmaxModel: p(t) = exp(theta_t) / sum_s exp(theta_s)

struct SoftmaxModel {
  Vec theta;

  static SoftmaxModel zeros(std::size_t n) { return {Vec(n, 0.0)}; }
  static SoftmaxModel random(std::size_t n, Xoshiro256& rng, double scale = 1.0) {
    return {detail::random_logits(n, rng, scale)};
  }
  static SoftmaxModel from_dist(const Dist& q) { return {q.logs()}; }

  std::size_t size() const { return theta.size(); }
  Dist dist() const { return normalize_log(theta); }
};

inline Dist joint(const SoftmaxModel& m) { return m.dist(); }

inline double log_prob(const SoftmaxModel& m, std::size_t t) {
  require(t < m.size(), ErrorCode::IndexOutOfRange, "configuration index out of range");
  return m.dist().log(t);
}

inline Vec params(const SoftmaxModel& m) { return m.theta; }
inline SoftmaxModel with_params(const SoftmaxModel&, Vec v) { return {std::move(v)}; }

inline Vec grad_expected_log_prob(const SoftmaxModel& m, const Dist& q) {
  require(q.size() == m.size(), ErrorCode::ShapeMismatch, "q and model sizes differ");
  const Dist p = m.dist();
  Vec g(m.size());
  for (std::size_t t = 0; t < m.size(); ++t) g[t] = q[t] - p[t];
  return g;
}

inline SoftmaxModel exact_projection(const SoftmaxModel& m, const Dist& q) {
  require(q.size() == m.size(), ErrorCode::ShapeMismatch, "q and model sizes differ");
  return SoftmaxModel::from_dist(q);
}

// ---------------------------------------------------------------------------
// ConditionalSoftmaxModel: row-wise softmax over an |X| x |Y| logit matrix.

struct ConditionalSoftmaxModel {
  std::size_t nx = 0;
  std::size_t ny = 0;
  Vec theta;  // row-major, theta[x * ny + y]

  static ConditionalSoftmaxModel zeros(std::size_t nx, std::size_t ny) { return {nx, ny, Vec(nx * ny, 0.0)}; }
  static ConditionalSoftmaxModel random(std::size_t nx, std::size_t ny, Xoshiro256& rng, double scale = 1.0) {
    return {nx, ny, detail::random_logits(nx * ny, rng, scale)};
  }
  static ConditionalSoftmaxModel from_probs(std::size_t nx, std::size_t ny, const Vec& probs) {
    require(probs.size() == nx * ny, ErrorCode::ShapeMismatch, "conditional table has the wrong size");
    ConditionalSoftmaxModel m{nx, ny, Vec(nx * ny)};
    for (std::size_t i = 0; i < probs.size(); ++i) m.theta[i] = safe_log(probs[i]);
    for (std::size_t x = 0; x < nx; ++x) (void)m.row(x);  // validates every row
    return m;
  }

  std::span<const double> logits(std::size_t x) const { return {theta.data() + x * ny, ny}; }
  Dist row(std::size_t x) const {
    require(x < nx, ErrorCode::IndexOutOfRange, "input index out of range");
    return normalize_log(logits(x));
  }
  /// Row-major table of p(y|x).
  Vec table() const {
    Vec out(nx * ny);
    for (std::size_t x = 0; x < nx; ++x) {
      const Dist r = row(x);
      for (std::size_t y = 0; y < ny; ++y) out[x * ny + y] = r[y];
    }
    return out;
  }
  double prob(std::size_t x, std::size_t y) const {
    require(y < ny, ErrorCode::IndexOutOfRange, "output index out of range");
    return row(x)[y];
  }
};

inline double log_prob(const ConditionalSoftmaxModel& m, std::size_t x, std::size_t y) {
  require(y < m.ny, ErrorCode::IndexOutOfRange, "output index out of range");
  return m.row(x).log(y);
}

/// Joint p(x, y) = p(x) * p_theta(y|x) with a fixed input marginal (the data
/// marginal for supervised recipes, p0 for the reward recipes).
struct JointConditionalModel {
  ConditionalSoftmaxModel policy;
  Dist x_marginal;

  std::size_t size() const { return policy.nx * policy.ny; }
};

inline Dist joint(const JointConditionalModel& m) {
  require(m.x_marginal.size() == m.policy.nx, ErrorCode::ShapeMismatch, "input marginal has the wrong size");
  Vec p(m.size());
  for (std::size_t x = 0; x < m.policy.nx; ++x) {
    const Dist r = m.policy.row(x);
    for (std::size_t y = 0; y < m.policy.ny; ++y) p[x * m.policy.ny + y] = m.x_marginal[x] * r[y];
  }
  return Dist::from_probs(std::move(p));
}

inline double log_prob(const JointConditionalModel& m, std::size_t t) {
  require(t < m.size(), ErrorCode::IndexOutOfRange, "configuration index out of range");
  const std::size_t x = t / m.policy.ny, y = t % m.policy.ny;
  return m.x_marginal.log(x) + m.policy.row(x).log(y);
}

inline Vec params(const JointConditionalModel& m) { return m.policy.theta; }
inline JointConditionalModel with_params(const JointConditionalModel& m, Vec v) {
  require(v.size() == m.policy.theta.size(), ErrorCode::ShapeMismatch, "parameter vector has the wrong size");
  JointConditionalModel out = m;
  out.policy.theta = std::move(v);
  return out;
}

inline Vec grad_expected_log_prob(const JointConditionalModel& m, const Dist& q) {
  require(q.size() == m.size(), ErrorCode::ShapeMismatch, "q and model sizes differ");
  const std::size_t ny = m.policy.ny;
  Vec g(m.size(), 0.0);
  for (std::size_t x = 0; x < m.policy.nx; ++x) {
    double qx = 0.0;
    for (std::size_t y = 0; y < ny; ++y) qx += q[x * ny + y];
    const Dist r = m.policy.row(x);
    for (std::size_t y = 0; y < ny; ++y) g[x * ny + y] = q[x * ny + y] - qx * r[y];
  }
  return g;
}

inline JointConditionalModel exact_projection(const JointConditionalModel& m, const Dist& q) {
  require(q.size() == m.size(), ErrorCode::ShapeMismatch, "q and model sizes differ");
  JointConditionalModel out = m;
  const std::size_t ny = m.policy.ny;
  for (std::size_t x = 0; x < m.policy.nx; ++x) {
    double qx = 0.0;
    for (std::size_t y = 0; y < ny; ++y) qx += q[x * ny + y];
    if (qx <= 0.0) continue;  // row carries no mass under q; keep it
    for (std::size_t y = 0; y < ny; ++y) out.policy.theta[x * ny + y] = safe_log(q[x * ny + y] / qx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MixtureModel: p(x, y) = softmax(mixture)_y * softmax(component_y)_x over the
// product domain X x Y with pair index t = x * K + y.

struct MixtureModel {
  std::size_t k = 0;   // components |Y|
  std::size_t nx = 0;  // observed symbols |X|
  Vec mixture;         // K
  Vec components;      // K x |X|, row-major components[y * nx + x]

  static MixtureModel zeros(std::size_t k, std::size_t nx) { return {k, nx, Vec(k, 0.0), Vec(k * nx, 0.0)}; }
  static MixtureModel random(std::size_t k, std::size_t nx, Xoshiro256& rng, double scale = 1.0) {
    return {k, nx, detail::random_logits(k, rng, scale), detail::random_logits(k * nx, rng, scale)};
  }
  /// Builds logits from mixture weights and per-component emission tables.
  static MixtureModel from_probs(const Vec& weights, const Vec& emissions) {
    const std::size_t k = weights.size();
    require(k >= 1 && emissions.size() % k == 0, ErrorCode::ShapeMismatch, "emission table has the wrong size");
    MixtureModel m{k, emissions.size() / k, Vec(k), Vec(emissions.size())};
    for (std::size_t y = 0; y < k; ++y) m.mixture[y] = safe_log(weights[y]);
    for (std::size_t i = 0; i < emissions.size(); ++i) m.components[i] = safe_log(emissions[i]);
    return m;
  }

  std::size_t size() const { return k * nx; }
  std::span<const double> component_logits(std::size_t y) const { return {components.data() + y * nx, nx}; }
  Dist weights() const { return normalize_log(mixture); }
  Dist component(std::size_t y) const {
    require(y < k, ErrorCode::IndexOutOfRange, "component index out of range");
    return normalize_log(component_logits(y));
  }
  double joint_log(std::size_t x, std::size_t y) const {
    require(x < nx && y < k, ErrorCode::IndexOutOfRange, "mixture index out of range");
    return weights().log(y) + component(y).log(x);
  }
  Vec marginal() const {
    Vec px(nx, 0.0);
    const Dist w = weights();
    for (std::size_t y = 0; y < k; ++y) {
      const Dist c = component(y);
      for (std::size_t x = 0; x < nx; ++x) px[x] += w[y] * c[x];
    }
    return px;
  }
};

inline Dist joint(const MixtureModel& m) {
  Vec scores(m.size());
  const Dist w = m.weights();
  for (std::size_t y = 0; y < m.k; ++y) {
    const Dist c = m.component(y);
    for (std::size_t x = 0; x < m.nx; ++x) {
      const double s = w.log(y) + c.log(x);
      scores[x * m.k + y] = s;
    }
  }
  return normalize_log(scores);
}

inline double log_prob(const MixtureModel& m, std::size_t x, std::size_t y) { return m.joint_log(x, y); }
inline double log_prob(const MixtureModel& m, std::size_t t) {
  require(t < m.size(), ErrorCode::IndexOutOfRange, "configuration index out of range");
  return m.joint_log(t / m.k, t % m.k);
}

/// Exact Bayes posterior over components for observation x.
inline Dist posterior(const MixtureModel& m, std::size_t x) {
  require(x < m.nx, ErrorCode::IndexOutOfRange, "observation index out of range");
  Vec scores(m.k);
  for (std::size_t y = 0; y < m.k; ++y) scores[y] = m.joint_log(x, y);
  require(logsumexp(scores) != kNegInf, ErrorCode::ZeroMarginal, "observation has zero marginal probability");
  return normalize_log(scores);
}

inline Vec params(const MixtureModel& m) {
  Vec v = m.mixture;
  v.insert(v.end(), m.components.begin(), m.components.end());
  return v;
}

inline MixtureModel with_params(const MixtureModel& m, Vec v) {
  require(v.size() == m.k + m.k * m.nx, ErrorCode::ShapeMismatch, "parameter vector has the wrong size");
  MixtureModel out = m;
  out.mixture.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m.k));
  out.components.assign(v.begin() + static_cast<std::ptrdiff_t>(m.k), v.end());
  return out;
}

inline Vec grad_expected_log_prob(const MixtureModel& m, const Dist& q) {
  require(q.size() == m.size(), ErrorCode::ShapeMismatch, "q and model sizes differ");
  Vec g(m.k + m.k * m.nx, 0.0);
  const Dist w = m.weights();
  for (std::size_t y = 0; y < m.k; ++y) {
    double qy = 0.0;
    for (std::size_t x = 0; x < m.nx; ++x) qy += q[x * m.k + y];
    g[y] = qy - w[y];
    const Dist c = m.component(y);
    for (std::size_t x = 0; x < m.nx; ++x) g[m.k + y * m.nx + x] = q[x * m.k + y] - qy * c[x];
  }
  return g;
}

/// The mixture family contains every joint over X x Y (p(y) p(x|y)), so the
/// projection is exact: weights = q(y), emissions = q(x|y).
inline MixtureModel exact_projection(const MixtureModel& m, const Dist& q) {
  require(q.size() == m.size(), ErrorCode::ShapeMismatch, "q and model sizes differ");
  MixtureModel out = m;
  for (std::size_t y = 0; y < m.k; ++y) {
    double qy = 0.0;
    for (std::size_t x = 0; x < m.nx; ++x) qy += q[x * m.k + y];
    out.mixture[y] = safe_log(qy);
    if (qy <= 0.0) continue;
    for (std::size_t x = 0; x < m.nx; ++x) out.components[y * m.nx + x] = safe_log(q[x * m.k + y] / qy);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generic helpers shared by all families

template <class M>
double expected_log_prob(const M& m, const Dist& q) {
  return expect(q.span(), joint(m).logs());
}

template <class M>
struct FitResult {
  M model;
  int accepted_steps = 0;
  Vec objective_trace;  // E_q[log p] after each accepted step, starting value first
};

/// Gradient ascent on E_q[log p_theta] with backtracking: a step that would
/// decrease the objective is halved, at most 30 times, before fitting stops.
template <class M>
FitResult<M> gradient_fit(const M& model, const Dist& q, int steps, double step_size) {
  require(steps >= 0, ErrorCode::InvalidArgument, "steps must be >= 0");
  require(step_size > 0.0, ErrorCode::InvalidArgument, "step size must be > 0");
  FitResult<M> result{model, 0, {expected_log_prob(model, q)}};
  double current = result.objective_trace.front();
  for (int s = 0; s < steps; ++s) {
    const Vec g = grad_expected_log_prob(result.model, q);
    detail::check_finite_gradient(g);
    double eta = step_size;
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, eta *= 0.5) {
      Vec theta = params(result.model);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eta * g[i];
      M candidate = with_params(result.model, std::move(theta));
      const double value = expected_log_prob(candidate, q);
      if (value >= current) {
        result.model = std::move(candidate);
        current = value;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++result.accepted_steps;
    result.objective_trace.push_back(current);
  }
  return result;
}

/// Student fit. The softmax family attains any q, so the optimum is installed
/// directly; structured families take backtracking gradient steps.
inline SoftmaxModel fit_to(const SoftmaxModel& m, const Dist& q, int steps = 0, double step_size = 1.0) {
  require(steps >= 0 && step_size > 0.0, ErrorCode::InvalidArgument, "steps must be >= 0 and step size > 0");
  return exact_projection(m, q);
}

inline MixtureModel fit_to(const MixtureModel& m, const Dist& q, int steps, double step_size) {
  return gradient_fit(m, q, steps, step_size).model;
}

inline JointConditionalModel fit_to(const JointConditionalModel& m, const Dist& q, int steps, double step_size) {
  return gradient_fit(m, q, steps, step_size).model;
}

// ---------------------------------------------------------------------------
// Runtime-polymorphic handle used by the solver and recipes.

using Model = std::variant<SoftmaxModel, JointConditionalModel, MixtureModel>;

inline Dist joint(const Model& m) {
  return std::visit([](const auto& v) { return joint(v); }, m);
}
inline Vec params(const Model& m) {
  return std::visit([](const auto& v) { return params(v); }, m);
}
inline Model with_params(const Model& m, Vec p) {
  return std::visit([&](const auto& v) -> Model { return with_params(v, std::move(p)); }, m);
}
inline Vec grad_expected_log_prob(const Model& m, const Dist& q) {
  return std::visit([&](const auto& v) { return grad_expected_log_prob(v, q); }, m);
}
inline Model exact_projection(const Model& m, const Dist& q) {
  return std::visit([&](const auto& v) -> Model { return exact_projection(v, q); }, m);
}
inline Model fit_to(const Model& m, const Dist& q, int steps, double step_size) {
  return std::visit([&](const auto& v) -> Model { return fit_to(v, q, steps, step_size); }, m);
}
inline std::size_t domain_size(const Model& m) {
  return std::visit([](const auto& v) { return v.size(); }, m);
}

}  // namespace sekit
