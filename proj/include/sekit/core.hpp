// SPDX-License-Identifier: Apache-2.0
#pragma once

// Finite configuration domains, exact probability vectors kept in both linear
// and log space, and the uncertainty (entropy) functions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sekit/error.hpp"

namespace sekit {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Sum tolerance for a probability vector.
inline constexpr double kSimplexTol = 1e-9;
/// Pointwise consistency tolerance between p and exp(logp).
inline constexpr double kPointTol = 1e-12;

// ---------------------------------------------------------------------------
// Domain

class Domain {
 public:
  explicit Domain(std::vector<std::string> labels) : labels_(std::move(labels)) { validate(); }

  static Domain indexed(std::size_t n) {
    require(n >= 1, ErrorCode::InvalidArgument, "domain size must be >= 1");
    std::vector<std::string> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = std::to_string(i);
    return Domain(std::move(labels));
  }

  /// Product domain X x Y with pair index t = x * |Y| + y. Labels are "x,y".
  static Domain product(const std::vector<std::string>& xs, const std::vector<std::string>& ys) {
    require(!xs.empty() && !ys.empty(), ErrorCode::InvalidArgument, "product factors must be non-empty");
    std::vector<std::string> labels;
    labels.reserve(xs.size() * ys.size());
    for (const auto& x : xs)
      for (const auto& y : ys) labels.push_back(x + "," + y);
    Domain d(std::move(labels));
    d.factors_ = std::pair{xs.size(), ys.size()};
    d.x_labels_ = xs;
    d.y_labels_ = ys;
    return d;
  }

  static Domain product(std::size_t nx, std::size_t ny) {
    std::vector<std::string> xs(nx), ys(ny);
    for (std::size_t i = 0; i < nx; ++i) xs[i] = std::to_string(i);
    for (std::size_t j = 0; j < ny; ++j) ys[j] = std::to_string(j);
    return product(xs, ys);
  }

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t t) const { return labels_.at(t); }

  bool is_product() const { return factors_.has_value(); }
  std::size_t nx() const { return factors_ ? factors_->first : size(); }
  std::size_t ny() const { return factors_ ? factors_->second : 1; }
  const std::vector<std::string>& x_labels() const { return x_labels_; }
  const std::vector<std::string>& y_labels() const { return y_labels_; }

  std::size_t pair(std::size_t x, std::size_t y) const {
    require(is_product(), ErrorCode::DomainMismatch, "domain has no product structure");
    require(x < nx() && y < ny(), ErrorCode::IndexOutOfRange, "pair index out of range");
    return x * ny() + y;
  }

  std::pair<std::size_t, std::size_t> unpair(std::size_t t) const {
    require(is_product(), ErrorCode::DomainMismatch, "domain has no product structure");
    require(t < size(), ErrorCode::IndexOutOfRange, "configuration index out of range");
    return {t / ny(), t % ny()};
  }

  std::optional<std::size_t> index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }

  bool operator==(const Domain& other) const {
    return labels_ == other.labels_ && factors_ == other.factors_;
  }

 private:
  void validate() const {
    require(!labels_.empty(), ErrorCode::InvalidArgument, "domain size must be >= 1");
    std::unordered_set<std::string> seen(labels_.begin(), labels_.end());
    require(seen.size() == labels_.size(), ErrorCode::InvalidArgument, "domain labels must be unique");
  }

  std::vector<std::string> labels_;
  std::optional<std::pair<std::size_t, std::size_t>> factors_;
  std::vector<std::string> x_labels_;
  std::vector<std::string> y_labels_;
};

// ---------------------------------------------------------------------------
// Extended-real helpers

inline double logsumexp(std::span<const double> scores) {
  double mx = kNegInf;
  for (double s : scores) mx = std::max(mx, s);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - mx);
  return mx + std::log(acc);
}

/// E_q[f] with the convention 0 * (-inf) = 0.
inline double expect(std::span<const double> q, std::span<const double> f) {
  require(q.size() == f.size(), ErrorCode::ShapeMismatch, "expectation operands differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) acc += q[i] * f[i];
  return acc;
}

/// beta * v with beta == 0 annihilating -inf.
inline double scale_ext(double beta, double v) { return beta == 0.0 ? 0.0 : beta * v; }

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// ---------------------------------------------------------------------------
// Dist

class Dist {
 public:
  /// Validates and renormalizes a probability vector.
  static Dist from_probs(Vec p) {
    require(!p.empty(), ErrorCode::InvalidArgument, "distribution must be non-empty");
    double sum = 0.0;
    for (double v : p) {
      require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument, "probabilities must be finite and >= 0");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= kSimplexTol, ErrorCode::InvalidArgument,
            "probabilities must sum to 1 (got " + std::to_string(sum) + ")");
    for (double& v : p) v /= sum;
    return from_normalized(std::move(p));
  }

  /// Keeps the given values bit for bit; they must already sum to 1 within
  /// kSimplexTol.
  static Dist from_normalized(Vec p) {
    require(!p.empty(), ErrorCode::InvalidArgument, "distribution must be non-empty");
    double sum = 0.0;
    for (double v : p) {
      require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument, "probabilities must be finite and >= 0");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= kSimplexTol, ErrorCode::InvalidArgument, "probabilities must sum to 1");
    Vec logp(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) logp[i] = safe_log(p[i]);
    return Dist(std::move(p), std::move(logp));
  }

  /// Normalizes non-negative weights.
  static Dist from_weights(const Vec& w) {
    double sum = 0.0;
    for (double v : w) {
      require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument, "weights must be finite and >= 0");
      sum += v;
    }
    require(sum > 0.0, ErrorCode::AllZeroWeights, "weights sum to zero");
    Vec logw(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) logw[i] = safe_log(w[i]);
    return from_log_scores(logw);
  }

  static Dist uniform(std::size_t n) { return from_probs(Vec(n, 1.0 / static_cast<double>(n))); }

  static Dist point_mass(std::size_t n, std::size_t i) {
    require(i < n, ErrorCode::IndexOutOfRange, "point mass index out of range");
    Vec p(n, 0.0);
    p[i] = 1.0;
    return from_probs(std::move(p));
  }

  /// logp_i = s_i - logsumexp(s), max-shifted.
  static Dist from_log_scores(std::span<const double> scores) {
    require(!scores.empty(), ErrorCode::InvalidArgument, "scores must be non-empty");
    for (double s : scores)
      require(!std::isnan(s) && s != kInf, ErrorCode::InvalidArgument, "scores must be < +inf and not NaN");
    const double lse = logsumexp(scores);
    require(lse != kNegInf, ErrorCode::AllNegInfinity, "every score is -inf");
    Vec logp(scores.size()), p(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      logp[i] = scores[i] == kNegInf ? kNegInf : scores[i] - lse;
      p[i] = std::exp(logp[i]);
      sum += p[i];
    }
    // sum is 1 up to a few ulps; fold the residual into p without touching logp.
    for (double& v : p) v /= sum;
    return Dist(std::move(p), std::move(logp));
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  double log(std::size_t i) const { return logp_[i]; }
  const Vec& probs() const { return p_; }
  const Vec& logs() const { return logp_; }
  std::span<const double> span() const { return p_; }

  bool interior() const {
    return std::all_of(p_.begin(), p_.end(), [](double v) { return v > 0.0; });
  }

 private:
  Dist(Vec p, Vec logp) : p_(std::move(p)), logp_(std::move(logp)) {}

  Vec p_;
  Vec logp_;
};

inline Dist normalize_log(std::span<const double> scores) { return Dist::from_log_scores(scores); }

inline double tv_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "TV operands differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return 0.5 * acc;
}

inline double tv_distance(const Dist& a, const Dist& b) { return tv_distance(a.span(), b.span()); }

// ---------------------------------------------------------------------------
// Uncertainty functions

struct UncertaintyFn {
  enum class Kind { Shannon, Tsallis };
  Kind kind = Kind::Shannon;
  double index = 2.0;  // Tsallis entropic index k; unused for Shannon

  static UncertaintyFn shannon() { return {}; }
  static UncertaintyFn tsallis(double k) {
    require(k > 0.0 && k != 1.0 && std::isfinite(k), ErrorCode::InvalidArgument,
            "Tsallis index must be > 0 and != 1");
    return {Kind::Tsallis, k};
  }
};

/// Entropy of an arbitrary non-negative vector (the orthant extension), used
/// directly by the finite-difference checks.
inline double entropy(std::span<const double> q, const UncertaintyFn& h) {
  double acc = 0.0;
  if (h.kind == UncertaintyFn::Kind::Shannon) {
    for (double v : q)
      if (v > 0.0) acc -= v * std::log(v);
    return acc;
  }
  for (double v : q)
    if (v > 0.0) acc += std::pow(v, h.index);
  return (1.0 - acc) / (h.index - 1.0);
}

inline double entropy(const Dist& q, const UncertaintyFn& h = {}) { return entropy(q.span(), h); }

inline Vec entropy_grad(std::span<const double> q, const UncertaintyFn& h) {
  Vec g(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    require(q[i] > 0.0, ErrorCode::BoundaryPoint, "entropy gradient undefined on the simplex boundary");
    if (h.kind == UncertaintyFn::Kind::Shannon)
      g[i] = -std::log(q[i]) - 1.0;
    else
      g[i] = -h.index * std::pow(q[i], h.index - 1.0) / (h.index - 1.0);
  }
  return g;
}

inline Vec entropy_grad(const Dist& q, const UncertaintyFn& h = {}) { return entropy_grad(q.span(), h); }

}  // namespace sekit
