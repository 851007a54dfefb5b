// SPDX-License-Identifier: Apache-2.0
#pragma once

// Learnable tabular discriminators used as dynamic experience, and the
// alternating loops of the GAN-family recipes. All expectations are exact
// sums over the domain.

#include <algorithm>
#include <cmath>
#include <string>

#include "sekit/solver.hpp"

namespace sekit {

struct Discriminator {
  enum class Mode {
    Classifier,  // f(t) = log sigmoid(phi_t)
    Critic,      // f(t) = phi_t
  };
  Mode mode = Mode::Classifier;
  Vec phi;
  /// Bound c on |phi_{i+1} - phi_i| / (x_{i+1} - x_i); 0 leaves phi free.
  double lipschitz = 0.0;
  /// Ordered coordinates of the domain points; empty means 0, 1, ..., n-1.
  Vec coords;

  static Discriminator classifier(std::size_t n) { return {Mode::Classifier, Vec(n, 0.0), 0.0, {}}; }
  static Discriminator critic(std::size_t n) { return {Mode::Critic, Vec(n, 0.0), 0.0, {}}; }
  static Discriminator lipschitz_critic(std::size_t n, double c = 1.0, Vec coords = {}) {
    require(c > 0.0, ErrorCode::InvalidArgument, "Lipschitz bound must be > 0");
    return {Mode::Critic, Vec(n, 0.0), c, std::move(coords)};
  }

  std::size_t size() const { return phi.size(); }
  bool constrained() const { return lipschitz > 0.0; }

  double spacing(std::size_t j) const {
    return coords.empty() ? 1.0 : coords[j + 1] - coords[j];
  }

  /// Experience values f_phi.
  Vec values() const {
    Vec f(phi.size());
    for (std::size_t t = 0; t < phi.size(); ++t)
      f[t] = mode == Mode::Classifier ? log_sigmoid(phi[t]) : phi[t];
    return f;
  }

  /// sigmoid(phi), the classifier's probability of "real".
  Vec probabilities() const {
    Vec s(phi.size());
    for (std::size_t t = 0; t < phi.size(); ++t) s[t] = sigmoid(phi[t]);
    return s;
  }

  ExperienceFn experience() const { return ExperienceFn::from_values(values()); }

  void validate() const {
    require(!phi.empty(), ErrorCode::InvalidArgument, "discriminator must be non-empty");
    require(coords.empty() || coords.size() == phi.size(), ErrorCode::ShapeMismatch,
            "coordinates do not match the discriminator");
    for (std::size_t j = 0; j + 1 < coords.size(); ++j)
      require(coords[j + 1] > coords[j], ErrorCode::InvalidArgument, "coordinates must be strictly increasing");
  }

  static double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  /// log sigmoid(z) = -log(1 + e^{-z}), stable for both signs.
  static double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
};

// ---------------------------------------------------------------------------
// Free parameters. Unconstrained discriminators are parameterized by phi.
// Lipschitz-bounded ones by (phi_0, d_1, ..., d_{n-1}) with
// phi_i = phi_0 + sum_{j < i} d_j and the box |d_j| <= c (x_{j+1} - x_j),
// on which Euclidean projection is coordinate-wise clipping.

inline Vec disc_params(const Discriminator& d) {
  if (!d.constrained()) return d.phi;
  Vec v(d.size());
  v[0] = d.phi[0];
  for (std::size_t j = 0; j + 1 < d.size(); ++j) v[j + 1] = d.phi[j + 1] - d.phi[j];
  return v;
}

inline Discriminator disc_with_params(const Discriminator& d, const Vec& v) {
  require(v.size() == d.size(), ErrorCode::ShapeMismatch, "parameter vector has the wrong size");
  Discriminator out = d;
  if (!d.constrained()) {
    out.phi = v;
    return out;
  }
  out.phi[0] = v[0];
  for (std::size_t j = 0; j + 1 < d.size(); ++j) out.phi[j + 1] = out.phi[j] + v[j + 1];
  return out;
}

/// Clips successive differences into the Lipschitz box, keeping phi_0.
inline Discriminator project_lipschitz(const Discriminator& d) {
  if (!d.constrained()) return d;
  Vec v = disc_params(d);
  for (std::size_t j = 0; j + 1 < d.size(); ++j) {
    const double bound = d.lipschitz * d.spacing(j);
    v[j + 1] = std::clamp(v[j + 1], -bound, bound);
  }
  return disc_with_params(d, v);
}

namespace detail {

/// Chain rule from d/dphi to the free parameters.
inline Vec to_param_gradient(const Discriminator& d, const Vec& g_phi) {
  if (!d.constrained()) return g_phi;
  Vec g(d.size(), 0.0);
  double tail = 0.0;
  for (std::size_t i = d.size(); i-- > 1;) {
    tail += g_phi[i];
    g[i] = tail;  // d/d(d_{i-1}) = sum_{k >= i} g_phi[k]
  }
  g[0] = tail + g_phi[0];
  return g;
}

/// d/dphi of E_pd[log s] + sum_t w_t log(1 - s_t) (classifier) or
/// E_pd[phi] - sum_t w_t phi_t (critic).
inline Vec phi_gradient(const Discriminator& d, std::span<const double> fake, std::span<const double> real) {
  Vec g(d.size());
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (d.mode == Discriminator::Mode::Classifier) {
      const double s = Discriminator::sigmoid(d.phi[t]);
      g[t] = real[t] * (1.0 - s) - fake[t] * s;
    } else {
      g[t] = real[t] - fake[t];
    }
  }
  return g;
}

inline double weighted_objective(const Discriminator& d, std::span<const double> fake, std::span<const double> real) {
  double acc = 0.0;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (d.mode == Discriminator::Mode::Classifier) {
      if (real[t] > 0.0) acc += real[t] * Discriminator::log_sigmoid(d.phi[t]);
      if (fake[t] > 0.0) acc += fake[t] * Discriminator::log_sigmoid(-d.phi[t]);
    } else {
      acc += (real[t] - fake[t]) * d.phi[t];
    }
  }
  return acc;
}

/// w_t = p_theta(t) exp{f_frozen(t)} / Z, evaluated in log space.
inline Vec importance_weights(const Dist& p_theta, std::span<const double> f_frozen) {
  Vec s(p_theta.size());
  for (std::size_t t = 0; t < s.size(); ++t)
    s[t] = p_theta.log(t) == kNegInf || f_frozen[t] == kNegInf ? kNegInf : p_theta.log(t) + f_frozen[t];
  const double lse = logsumexp(s);
  require(lse != kNegInf, ErrorCode::AllZeroWeights, "importance weights vanish");
  Vec w(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) w[t] = s[t] == kNegInf ? 0.0 : std::exp(s[t] - lse);
  return w;
}

}  // namespace detail

/// Discriminator objective against a fake distribution q. Classifier mode
/// uses the binary cross-entropy form E_pd[log s] + E_q[log(1 - s)], critic
/// modes E_pd[f] - E_q[f].
inline double discriminator_objective(const Discriminator& d, const Dist& q, const Dist& p_data) {
  require(q.size() == d.size() && p_data.size() == d.size(), ErrorCode::ShapeMismatch,
          "distribution sizes do not match the discriminator");
  return detail::weighted_objective(d, q.span(), p_data.span());
}

/// Gradient of discriminator_objective with respect to the free parameters.
inline Vec discriminator_gradient(const Discriminator& d, const Dist& q, const Dist& p_data) {
  require(q.size() == d.size() && p_data.size() == d.size(), ErrorCode::ShapeMismatch,
          "distribution sizes do not match the discriminator");
  Vec g = detail::to_param_gradient(d, detail::phi_gradient(d, q.span(), p_data.span()));
  detail::check_finite_gradient(g);
  return g;
}

/// Importance-reweighted objective: fake expectations are taken under p_theta
/// with weights exp{f_frozen} / Z instead of under an explicit q.
inline double reweighted_objective(const Discriminator& d, std::span<const double> f_frozen, const Dist& p_theta,
                                   const Dist& p_data) {
  const Vec w = detail::importance_weights(p_theta, f_frozen);
  return detail::weighted_objective(d, w, p_data.span());
}

inline Vec reweighted_gradient(const Discriminator& d, std::span<const double> f_frozen, const Dist& p_theta,
                               const Dist& p_data) {
  require(p_theta.size() == d.size() && p_data.size() == d.size() && f_frozen.size() == d.size(),
          ErrorCode::ShapeMismatch, "sizes do not match the discriminator");
  const Vec w = detail::importance_weights(p_theta, f_frozen);
  Vec g = detail::to_param_gradient(d, detail::phi_gradient(d, w, p_data.span()));
  detail::check_finite_gradient(g);
  return g;
}

struct DiscriminatorUpdate {
  Discriminator disc;
  Vec objective;  // starting value, then one entry per accepted step
  int accepted_steps = 0;
};

namespace detail {

/// Projected gradient ascent with backtracking on a fixed fake weighting.
inline DiscriminatorUpdate ascend(Discriminator d, std::span<const double> fake, const Dist& p_data, int steps,
                                  double step_size) {
  require(steps >= 0 && step_size > 0.0, ErrorCode::InvalidArgument, "steps must be >= 0 and step size > 0");
  d.validate();
  d = project_lipschitz(d);
  DiscriminatorUpdate out{d, {weighted_objective(d, fake, p_data.span())}, 0};
  double current = out.objective.front();
  for (int s = 0; s < steps; ++s) {
    const Vec g = to_param_gradient(out.disc, phi_gradient(out.disc, fake, p_data.span()));
    check_finite_gradient(g);
    double eta = step_size;
    bool progress = false;
    for (int halving = 0; halving <= 30; ++halving, eta *= 0.5) {
      Vec v = disc_params(out.disc);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += eta * g[i];
      Discriminator cand = project_lipschitz(disc_with_params(out.disc, v));
      const double value = weighted_objective(cand, fake, p_data.span());
      if (value >= current) {
        progress = value > current;
        out.disc = std::move(cand);
        current = value;
        break;
      }
    }
    if (!progress) break;
    ++out.accepted_steps;
    out.objective.push_back(current);
  }
  return out;
}

}  // namespace detail

/// Gradient ascent on the discriminator objective against q; the objective
/// never decreases across accepted steps.
inline DiscriminatorUpdate discriminator_update(const Discriminator& d, const Dist& q, const Dist& p_data, int steps,
                                                double step_size) {
  require(q.size() == d.size() && p_data.size() == d.size(), ErrorCode::ShapeMismatch,
          "distribution sizes do not match the discriminator");
  return detail::ascend(d, q.span(), p_data, steps, step_size);
}

/// Ascent on the importance-reweighted objective with the weights frozen at
/// the incoming discriminator.
inline DiscriminatorUpdate reweighted_discriminator_update(const Discriminator& d, const Dist& p_theta,
                                                           const Dist& p_data, int steps, double step_size) {
  require(p_theta.size() == d.size() && p_data.size() == d.size(), ErrorCode::ShapeMismatch,
          "distribution sizes do not match the discriminator");
  const Vec w = detail::importance_weights(p_theta, d.values());
  return detail::ascend(d, w, p_data, steps, step_size);
}

// ---------------------------------------------------------------------------
// Adversarial loops

enum class GeneratorLoss {
  Minimax,        // descend E_p[log(1 - s)]
  NonSaturating,  // ascend E_p[log s]
};

struct AdversarialConfig {
  /// alpha = 0, beta = 1; the divergence selects the loop: JS gives the
  /// classifier GAN, W1 the Lipschitz-critic GAN, KL the reweighted GAN.
  SEConfig se;
  int disc_steps = 5;
  double disc_step_size = 1.0;
  double gen_step_size = 1.0;
  GeneratorLoss generator_loss = GeneratorLoss::Minimax;
  /// Lipschitz bound for the critic (W1) and, when > 0, for the classifier
  /// of the KL loop.
  double lipschitz = 1.0;
  Vec coords;

  void validate() const {
    require(se.alpha == 0.0 && se.beta == 1.0, ErrorCode::ModeUnsupported,
            "adversarial loops are defined for alpha = 0, beta = 1");
    require(se.divergence.kind != DivergenceFn::Kind::CrossEntropy, ErrorCode::ModeUnsupported,
            "adversarial loops need JS, W1 or KL");
    require(disc_steps >= 1 && disc_step_size > 0.0 && gen_step_size > 0.0, ErrorCode::InvalidArgument,
            "step counts and sizes must be positive");
    require(se.stopping.max_iters >= 1, ErrorCode::InvalidArgument, "need at least one outer iteration");
    require(lipschitz >= 0.0, ErrorCode::InvalidArgument, "Lipschitz bound must be >= 0");
    if (se.divergence.kind == DivergenceFn::Kind::W1)
      require(lipschitz > 0.0, ErrorCode::InvalidArgument, "the critic needs a positive Lipschitz bound");
  }
};

struct AdversarialResult {
  SoftmaxModel model;
  Discriminator disc;
  Trace trace;
};

inline Discriminator initial_discriminator(const AdversarialConfig& cfg, std::size_t n) {
  switch (cfg.se.divergence.kind) {
    case DivergenceFn::Kind::W1: return Discriminator::lipschitz_critic(n, cfg.lipschitz, cfg.coords);
    case DivergenceFn::Kind::KL: {
      Discriminator d = Discriminator::classifier(n);
      d.lipschitz = cfg.lipschitz;
      d.coords = cfg.coords;
      return d;
    }
    default: return Discriminator::classifier(n);
  }
}

namespace detail {

/// Softmax-logit gradient of E_p[g]: p_t (g_t - E_p[g]).
inline Vec expectation_logit_gradient(const Dist& p, const Vec& g) {
  const double mean = expect(p.span(), g);
  Vec out(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) out[t] = p[t] == 0.0 ? 0.0 : p[t] * (g[t] - mean);
  return out;
}

}  // namespace detail

/// Alternates discriminator and model updates from the given model.
///  JS: classifier on p_theta, then a generator step on the logits.
///  W1: Lipschitz critic on p_theta, then ascent of E_p[f] on the logits.
///  KL: reweighted classifier update, then the closed-form teacher
///      q = p_theta exp{f} / Z installed by an exact student.
/// Each record holds the SE terms at the pair (q, p_theta) the discriminator
/// was trained against, tv_to_ref = TV(p_theta, p_data), and in extras the
/// divergence to the data and the discriminator objective.
inline AdversarialResult adversarial_run(const AdversarialConfig& cfg, SoftmaxModel model, const Dist& p_data,
                                         std::optional<Discriminator> disc = std::nullopt) {
  cfg.validate();
  const std::size_t n = model.theta.size();
  require(p_data.size() == n, ErrorCode::DomainMismatch, "data and model domains differ");
  AdversarialResult out{std::move(model), disc ? *disc : initial_discriminator(cfg, n), {}};
  require(out.disc.size() == n, ErrorCode::DomainMismatch, "discriminator and model domains differ");
  const auto kind = cfg.se.divergence.kind;
  const DivergenceFn to_data = kind == DivergenceFn::Kind::W1 ? DivergenceFn::w1(cfg.coords) : cfg.se.divergence;
  detail::StopTracker stop;
  for (int iter = 0; iter < cfg.se.stopping.max_iters; ++iter) {
    const auto start = std::chrono::steady_clock::now();
    const Dist p = joint(out.model);
    Dist q = p;
    double disc_obj = 0.0;
    if (kind == DivergenceFn::Kind::KL) {
      const DiscriminatorUpdate u =
          reweighted_discriminator_update(out.disc, p, p_data, cfg.disc_steps, cfg.disc_step_size);
      out.disc = u.disc;
      disc_obj = u.objective.back();
      q = teacher_closed_form(p, out.disc.values(), cfg.se.beta, cfg.se.beta);
      out.model = exact_projection(out.model, q);
    } else {
      const DiscriminatorUpdate u = discriminator_update(out.disc, p, p_data, cfg.disc_steps, cfg.disc_step_size);
      out.disc = u.disc;
      disc_obj = u.objective.back();
      Vec g;
      if (kind == DivergenceFn::Kind::W1) {
        g = detail::expectation_logit_gradient(p, out.disc.values());
      } else {
        Vec h(n);
        for (std::size_t t = 0; t < n; ++t)
          h[t] = cfg.generator_loss == GeneratorLoss::Minimax ? -Discriminator::log_sigmoid(-out.disc.phi[t])
                                                              : Discriminator::log_sigmoid(out.disc.phi[t]);
        g = detail::expectation_logit_gradient(p, h);
      }
      detail::check_finite_gradient(g);
      for (std::size_t t = 0; t < n; ++t) out.model.theta[t] += cfg.gen_step_size * g[t];
    }
    const Dist p_new = joint(out.model);
    const Vec f = out.disc.values();
    TraceRecord rec;
    rec.iter = iter;
    rec.neg_alpha_H = 0.0;
    rec.beta_D = kind == DivergenceFn::Kind::KL ? divergence(DivergenceFn::kl(), q, p) : 0.0;
    rec.neg_Eqf = -expect(q.span(), f);
    rec.total = rec.neg_alpha_H + rec.beta_D + rec.neg_Eqf;
    rec.tv_to_ref = tv_distance(p_new, p_data);
    rec.q = q.probs();
    rec.theta = out.model.theta;
    rec.segment = cfg.se.label;
    const double d_data = divergence(to_data, p_new, p_data);
    rec.extras["divergence_to_data"] = d_data;
    rec.extras["disc_objective"] = disc_obj;
    rec.extras["divergence_at_disc"] = divergence(to_data, p, p_data);
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.trace.records.push_back(std::move(rec));
    if (stop.update(d_data, cfg.se.stopping)) {
      out.trace.converged = true;
      out.trace.stop_reason = "objective_tolerance";
      return out;
    }
  }
  out.trace.stop_reason = "max_iters";
  out.trace.diagnostics.push_back("NonConvergence: divergence to data still moving after " +
                                  std::to_string(cfg.se.stopping.max_iters) + " iterations");
  return out;
}

}  // namespace sekit
