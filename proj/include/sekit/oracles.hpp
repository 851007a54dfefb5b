// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference implementations of classical algorithms, written directly against
// the standard library. They deliberately share no code with the rest of the
// toolkit so that agreement between the two is evidence rather than tautology.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sekit::oracle {

using Vector = std::vector<double>;

/// Frequency estimate from counts.
inline Vector direct_mle(const Vector& counts) {
  double n = 0.0;
  for (double c : counts) n += c;
  if (!(n > 0.0)) throw std::invalid_argument("direct_mle: no observations");
  Vector p(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = counts[i] / n;
  return p;
}

/// prior(h) likelihood(h) / evidence.
inline Vector bayes_posterior(const Vector& prior, const Vector& likelihood) {
  Vector post(prior.size());
  double z = 0.0;
  for (std::size_t h = 0; h < prior.size(); ++h) z += post[h] = prior[h] * likelihood[h];
  if (!(z > 0.0)) throw std::invalid_argument("bayes_posterior: zero evidence");
  for (double& v : post) v /= z;
  return post;
}

/// D*(t) = p_data(t) / (p_data(t) + p_model(t)).
inline Vector gan_optimal_discriminator(const Vector& p_data, const Vector& p_model) {
  Vector d(p_data.size());
  for (std::size_t t = 0; t < d.size(); ++t) d[t] = p_data[t] / (p_data[t] + p_model[t]);
  return d;
}

// ---------------------------------------------------------------------------
// EM for a finite mixture over symbols

struct Mixture {
  Vector weights;    // pi_k
  Vector emissions;  // e_k(x) at k * nx + x
};

struct EMIterate {
  Vector q;  // p_data(x) r(k|x) at x * K + k
  Mixture params;
};

inline std::size_t symbols(const Mixture& m) { return m.emissions.size() / m.weights.size(); }

/// One E-step and M-step against the empirical distribution.
inline EMIterate em_step(const Vector& empirical, const Mixture& m) {
  const std::size_t k = m.weights.size(), nx = symbols(m);
  EMIterate out;
  out.q.assign(nx * k, 0.0);
  out.params.weights.assign(k, 0.0);
  out.params.emissions.assign(k * nx, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    if (empirical[x] == 0.0) continue;
    double evidence = 0.0;
    for (std::size_t c = 0; c < k; ++c) evidence += m.weights[c] * m.emissions[c * nx + x];
    for (std::size_t c = 0; c < k; ++c) {
      const double r = m.weights[c] * m.emissions[c * nx + x] / evidence;
      out.q[x * k + c] = empirical[x] * r;
      out.params.weights[c] += empirical[x] * r;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t x = 0; x < nx; ++x)
      out.params.emissions[c * nx + x] =
          out.params.weights[c] > 0.0 ? out.q[x * k + c] / out.params.weights[c] : m.emissions[c * nx + x];
  }
  return out;
}

/// -sum_x p_data(x) log sum_k pi_k e_k(x).
inline double negative_log_likelihood(const Vector& empirical, const Mixture& m) {
  const std::size_t k = m.weights.size(), nx = symbols(m);
  double acc = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    if (empirical[x] == 0.0) continue;
    double evidence = 0.0;
    for (std::size_t c = 0; c < k; ++c) evidence += m.weights[c] * m.emissions[c * nx + x];
    acc -= empirical[x] * std::log(evidence);
  }
  return acc;
}

inline std::vector<EMIterate> em(const Vector& empirical, Mixture init, int iterations) {
  std::vector<EMIterate> path;
  for (int i = 0; i < iterations; ++i) {
    path.push_back(em_step(empirical, init));
    init = path.back().params;
  }
  return path;
}

// ---------------------------------------------------------------------------
// Hedge

/// Weight trajectory w_0 = uniform, w_{t+1}(i) = w_t(i) exp(r_t(i) / eta) / Z.
inline std::vector<Vector> hedge(std::size_t experts, const std::vector<Vector>& rewards, double eta) {
  std::vector<Vector> path{Vector(experts, 1.0 / static_cast<double>(experts))};
  for (const Vector& r : rewards) {
    const Vector& w = path.back();
    Vector next(experts);
    double z = 0.0;
    for (std::size_t i = 0; i < experts; ++i) {
      next[i] = w[i] * std::exp(r[i] / eta);
      z += next[i];
    }
    for (double& v : next) v /= z;
    path.push_back(std::move(next));
  }
  return path;
}

// ---------------------------------------------------------------------------
// Exact policy gradient for a tabular MDP

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline Vector gaussian_solve(std::vector<Vector> a, Vector b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (a[pivot][col] == 0.0) throw std::runtime_error("gaussian_solve: singular system");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

struct MDP {
  std::size_t states = 0, actions = 0;
  Vector transition;  // P(s' | s, a) at (s * A + a) * S + s'
  Vector reward;      // r(s, a) at s * A + a
  double gamma = 0.9;
  Vector start;       // p0
};

struct PolicyGradient {
  Vector q;         // Q(s, a)
  Vector v;         // V(s)
  Vector mu;        // discounted visitation
  double value = 0.0;
  Vector gradient;  // d value / d logit(s, a) for a softmax policy
};

/// REINFORCE in expectation: g(s, a) = mu(s) pi(a|s) (Q(s, a) - V(s)),
/// with every quantity obtained by linear solves rather than sampling.
inline PolicyGradient exact_policy_gradient(const MDP& m, const Vector& policy) {
  const std::size_t S = m.states, A = m.actions;
  std::vector<Vector> lhs(S, Vector(S, 0.0));
  Vector r_pi(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    lhs[s][s] += 1.0;
    for (std::size_t a = 0; a < A; ++a) {
      const double pa = policy[s * A + a];
      r_pi[s] += pa * m.reward[s * A + a];
      for (std::size_t n = 0; n < S; ++n) lhs[s][n] -= m.gamma * pa * m.transition[(s * A + a) * S + n];
    }
  }
  PolicyGradient out;
  out.v = gaussian_solve(lhs, r_pi);
  out.q.assign(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double next = 0.0;
      for (std::size_t n = 0; n < S; ++n) next += m.transition[(s * A + a) * S + n] * out.v[n];
      out.q[s * A + a] = m.reward[s * A + a] + m.gamma * next;
    }
  std::vector<Vector> lhs_t(S, Vector(S, 0.0));
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j) lhs_t[i][j] = lhs[j][i];
  out.mu = gaussian_solve(lhs_t, m.start);
  for (std::size_t s = 0; s < S; ++s) out.value += m.start[s] * out.v[s];
  out.gradient.assign(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      out.gradient[s * A + a] = out.mu[s] * policy[s * A + a] * (out.q[s * A + a] - out.v[s]);
  return out;
}

}  // namespace sekit::oracle
