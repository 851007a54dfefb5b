// SPDX-License-Identifier: Apache-2.0
#pragma once

// Divergences D(q, p) between distributions on a finite domain, their
// q-gradients, and influence functions recovered from the convex-dual inner
// maximization. All span overloads accept unnormalized non-negative vectors
// (the orthant extension) so finite differences can be taken coordinatewise.

#include <cmath>
#include <string>

#include "sekit/core.hpp"

namespace sekit {

struct DivergenceFn {
  enum class Kind { CrossEntropy, KL, JS, W1 };
  Kind kind = Kind::CrossEntropy;
  /// Ordered 1-D ground coordinates for W1; empty means 0, 1, ..., N-1.
  Vec coords;

  static DivergenceFn cross_entropy() { return {}; }
  static DivergenceFn kl() { return {Kind::KL, {}}; }
  static DivergenceFn js() { return {Kind::JS, {}}; }
  static DivergenceFn w1(Vec coords = {}) { return {Kind::W1, std::move(coords)}; }
};

inline std::string to_string(DivergenceFn::Kind k) {
  switch (k) {
    case DivergenceFn::Kind::CrossEntropy: return "cross_entropy";
    case DivergenceFn::Kind::KL: return "kl";
    case DivergenceFn::Kind::JS: return "js";
    case DivergenceFn::Kind::W1: return "w1";
  }
  return "unknown";
}

/// A divergence value; support violations carry +inf with the tag set.
struct DivergenceValue {
  double value = 0.0;
  bool support_violation = false;
};

namespace detail {

inline Vec ground_coords(const DivergenceFn& d, std::size_t n) {
  if (d.coords.empty()) {
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
    return x;
  }
  require(d.coords.size() == n, ErrorCode::ShapeMismatch, "ground coordinates do not match the domain");
  for (std::size_t i = 1; i < n; ++i)
    require(d.coords[i] > d.coords[i - 1], ErrorCode::InvalidArgument, "ground coordinates must be increasing");
  return d.coords;
}

/// sum_i a_i log(a_i / b_i) over a_i > 0.
inline DivergenceValue kl_terms(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    if (b[i] <= 0.0) return {kInf, true};
    acc += a[i] * std::log(a[i] / b[i]);
  }
  return {acc, false};
}

}  // namespace detail

inline DivergenceValue divergence_value(const DivergenceFn& d, std::span<const double> q, std::span<const double> p) {
  require(q.size() == p.size(), ErrorCode::ShapeMismatch, "divergence operands differ in length");
  using K = DivergenceFn::Kind;
  switch (d.kind) {
    case K::CrossEntropy: {
      double acc = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0.0) continue;
        if (p[i] <= 0.0) return {kInf, true};
        acc -= q[i] * std::log(p[i]);
      }
      return {acc, false};
    }
    case K::KL:
      return detail::kl_terms(q, p);
    case K::JS: {
      Vec h(q.size());
      for (std::size_t i = 0; i < q.size(); ++i) h[i] = 0.5 * (q[i] + p[i]);
      return {0.5 * detail::kl_terms(q, h).value + 0.5 * detail::kl_terms(p, h).value, false};
    }
    case K::W1: {
      const Vec x = detail::ground_coords(d, q.size());
      double fq = 0.0, fp = 0.0, acc = 0.0;
      for (std::size_t i = 0; i + 1 < q.size(); ++i) {
        fq += q[i];
        fp += p[i];
        acc += std::abs(fq - fp) * (x[i + 1] - x[i]);
      }
      return {acc, false};
    }
  }
  return {};
}

inline double divergence(const DivergenceFn& d, std::span<const double> q, std::span<const double> p) {
  return divergence_value(d, q, p).value;
}

inline double divergence(const DivergenceFn& d, const Dist& q, const Dist& p) {
  return divergence(d, q.span(), p.span());
}

/// dD/dq_i. W1 uses the subgradient sign(F_q - F_p) accumulated from the right.
inline Vec divergence_grad_q(const DivergenceFn& d, std::span<const double> q, std::span<const double> p) {
  require(q.size() == p.size(), ErrorCode::ShapeMismatch, "divergence operands differ in length");
  const std::size_t n = q.size();
  Vec g(n);
  using K = DivergenceFn::Kind;
  switch (d.kind) {
    case K::CrossEntropy:
      for (std::size_t i = 0; i < n; ++i) {
        require(p[i] > 0.0, ErrorCode::SupportViolation, "cross-entropy gradient needs p > 0");
        g[i] = -std::log(p[i]);
      }
      break;
    case K::KL:
      for (std::size_t i = 0; i < n; ++i) {
        require(q[i] > 0.0, ErrorCode::BoundaryPoint, "KL gradient undefined on the simplex boundary");
        require(p[i] > 0.0, ErrorCode::SupportViolation, "KL gradient needs p > 0");
        g[i] = std::log(q[i] / p[i]) + 1.0;
      }
      break;
    case K::JS:
      for (std::size_t i = 0; i < n; ++i) {
        require(q[i] > 0.0, ErrorCode::BoundaryPoint, "JS gradient undefined on the simplex boundary");
        g[i] = 0.5 * std::log(2.0 * q[i] / (q[i] + p[i]));
      }
      break;
    case K::W1: {
      const Vec x = detail::ground_coords(d, n);
      Vec sign(n, 0.0);
      double fq = 0.0, fp = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        fq += q[i];
        fp += p[i];
        const double diff = fq - fp;
        sign[i] = (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0) * (x[i + 1] - x[i]);
      }
      double acc = 0.0;
      for (std::size_t j = n; j-- > 0;) {
        acc += sign[j];
        g[j] = acc;
      }
      break;
    }
  }
  return g;
}

inline Vec divergence_grad_q(const DivergenceFn& d, const Dist& q, const Dist& p) {
  return divergence_grad_q(d, q.span(), p.span());
}

// ---------------------------------------------------------------------------
// Influence functions

/// psi is stored mean-centered (uniform mean over the domain).
struct InfluenceFn {
  Vec psi;
  int iterations = 0;
  double stationarity = 0.0;  // max_i |q_i - h*_i(phi)| at exit
  bool converged = true;
  std::string diagnostic;
};

struct InfluenceOptions {
  double step = 0.1;
  int max_iters = 2000;
  double tol = 1e-10;
};

inline Vec mean_centered(Vec v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double& x : v) x -= mean;
  return v;
}

namespace detail {

/// argmax_h <phi, h> - JS(h, p) over the simplex. Stationarity gives
/// 2h/(h+p) = exp{2(phi - c)}; c is bisected so that h sums to one.
inline Vec js_conjugate_argmax(std::span<const double> phi, std::span<const double> p) {
  const std::size_t n = phi.size();
  double top = kNegInf;
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0) top = std::max(top, phi[i]);
  auto mass = [&](double c, Vec* out) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double h = 0.0;
      if (p[i] > 0.0) {
        const double u = std::exp(2.0 * (phi[i] - c));
        h = p[i] * u / (2.0 - u);
      }
      if (out) (*out)[i] = h;
      s += h;
    }
    return s;
  };
  // Mass falls monotonically in c on (top - log(2)/2, inf).
  double lo = top - 0.5 * std::log(2.0), hi = top + 1.0;
  while (mass(hi, nullptr) > 1.0) hi += hi - lo;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (mass(mid, nullptr) > 1.0 ? lo : hi) = mid;
  }
  Vec h(n);
  const double s = mass(hi, &h);
  for (double& v : h) v /= s;
  return h;
}

inline Vec conjugate_argmax(const DivergenceFn& d, std::span<const double> phi, std::span<const double> p) {
  if (d.kind == DivergenceFn::Kind::KL) {
    Vec scores(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) scores[i] = p[i] > 0.0 ? phi[i] + std::log(p[i]) : kNegInf;
    return Dist::from_log_scores(scores).probs();
  }
  return js_conjugate_argmax(phi, p);
}

/// Diagonal of d h*/d phi, used to precondition the dual ascent.
inline double conjugate_curvature(const DivergenceFn& d, double h, double p) {
  if (d.kind == DivergenceFn::Kind::KL) return h;
  return 2.0 * h * (h + p) / p;
}

}  // namespace detail

/// Influence function of J(q) = D(q, p_d) at q, from the inner problem
/// psi = argmax_phi E_q[phi] - J*(phi). The ascent direction q - h*(phi) is
/// preconditioned by the diagonal of dh*/dphi. CE is linear in q, so its
/// influence function -log p_d is returned directly.
inline InfluenceFn influence_function(const DivergenceFn& d, const Dist& p_data, const Dist& q,
                                      const InfluenceOptions& opts = {}) {
  require(q.size() == p_data.size(), ErrorCode::ShapeMismatch, "q and p_data sizes differ");
  using K = DivergenceFn::Kind;
  require(d.kind != K::W1, ErrorCode::ModeUnsupported, "influence functions are implemented for CE, KL and JS");
  require(q.interior() && p_data.interior(), ErrorCode::BoundaryPoint, "influence function needs interior q and p_data");
  if (d.kind == K::CrossEntropy) {
    Vec psi(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) psi[i] = -p_data.log(i);
    return {mean_centered(std::move(psi)), 0, 0.0, true, {}};
  }
  const std::size_t n = q.size();
  Vec phi(n, 0.0);
  InfluenceFn out;
  for (int it = 0; it <= opts.max_iters; ++it) {
    const Vec h = detail::conjugate_argmax(d, phi, p_data.span());
    double gap = 0.0;
    for (std::size_t i = 0; i < n; ++i) gap = std::max(gap, std::abs(q[i] - h[i]));
    out.iterations = it;
    out.stationarity = gap;
    if (gap <= opts.tol) break;
    if (it == opts.max_iters) {
      out.converged = false;
      out.diagnostic = "dual ascent stopped at stationarity " + std::to_string(gap);
      break;
    }
    for (std::size_t i = 0; i < n; ++i)
      phi[i] += opts.step * (q[i] - h[i]) / detail::conjugate_curvature(d, h[i], p_data[i]);
  }
  out.psi = mean_centered(std::move(phi));
  return out;
}

/// One probability-functional-descent step: q' ∝ q exp{-step psi}.
inline Dist pfd_step(const Dist& q, const InfluenceFn& psi, double step) {
  require(step > 0.0, ErrorCode::InvalidArgument, "step must be > 0");
  require(psi.psi.size() == q.size(), ErrorCode::ShapeMismatch, "influence function has the wrong size");
  Vec scores(q.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    scores[i] = q.log(i) == kNegInf ? kNegInf : q.log(i) - step * psi.psi[i];
  return normalize_log(scores);
}

}  // namespace sekit
