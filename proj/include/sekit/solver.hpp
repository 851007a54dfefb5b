// SPDX-License-Identifier: Apache-2.0
#pragma once

// Teacher-student alternation for
//
//   min_{q, theta}  -alpha H(q) + beta D(q, p_theta) - E_q[f]
//
// The teacher solves for q with theta fixed, the student moves theta toward q.
// Variants: closed-form, per-input conditional, mirror-descent, mean-field and
// sleep-phase teachers; exact, gradient and importance-sampling students. The
// multiplicative-weights loop and piecewise schedules are built on the same
// iteration.

#include <algorithm>
#include <chrono>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sekit/core.hpp"
#include "sekit/divergence.hpp"
#include "sekit/experience.hpp"
#include "sekit/models.hpp"
#include "sekit/rng.hpp"

namespace sekit {

enum class TeacherMode { ClosedForm, Conditional, MirrorDescent, MeanField, SleepPhase };
enum class StudentMode { Exact, Gradient, ImportanceSampling };

inline std::string to_string(TeacherMode m) {
  switch (m) {
    case TeacherMode::ClosedForm: return "closed_form";
    case TeacherMode::Conditional: return "conditional";
    case TeacherMode::MirrorDescent: return "mirror_descent";
    case TeacherMode::MeanField: return "mean_field";
    case TeacherMode::SleepPhase: return "sleep_phase";
  }
  return "unknown";
}

inline std::string to_string(StudentMode m) {
  switch (m) {
    case StudentMode::Exact: return "exact";
    case StudentMode::Gradient: return "gradient";
    case StudentMode::ImportanceSampling: return "importance_sampling";
  }
  return "unknown";
}

/// The default for "beta = a very small positive value".
inline constexpr double kEpsilonBeta = 1e-8;

struct StoppingRule {
  int max_iters = 10000;
  double tol = 1e-10;
  int patience = 5;  // consecutive iterations with |delta objective| < tol
};

struct SEConfig {
  double alpha = 1.0;
  double beta = 1.0;
  DivergenceFn divergence;
  UncertaintyFn uncertainty;
  TeacherMode teacher = TeacherMode::ClosedForm;
  StudentMode student = StudentMode::Exact;

  // Mirror-descent teacher
  int teacher_steps = 2000;
  double teacher_step_size = 1.0;
  double teacher_tol = 1e-14;
  // Mean-field teacher: factor sizes of the product domain (0 = from the model)
  std::size_t factor_x = 0;
  std::size_t factor_y = 0;
  int mean_field_sweeps = 50;
  // Conditional and sleep-phase teachers: q(x, y) = x_marginal(x) q(y|x)
  std::optional<Dist> x_marginal;
  int sleep_steps = 2000;
  double sleep_step_size = 1.0;

  // Students
  int student_steps = 100;
  double student_step_size = 1.0;
  /// Add d/dtheta E_q[f_theta] to the student gradient (otherwise f is held
  /// fixed at the teacher's theta).
  bool differentiate_experience = false;
  int is_samples = 1000;
  std::uint64_t seed = 0;

  StoppingRule stopping;
  std::optional<Dist> reference;
  std::string label;

  void validate() const {
    require(std::isfinite(alpha), ErrorCode::InvalidArgument, "alpha must be finite");
    require(std::isfinite(beta) && beta >= 0.0, ErrorCode::InvalidArgument, "beta must be finite and >= 0");
    const bool ce_shannon = divergence.kind == DivergenceFn::Kind::CrossEntropy &&
                            uncertainty.kind == UncertaintyFn::Kind::Shannon;
    switch (teacher) {
      case TeacherMode::ClosedForm:
      case TeacherMode::Conditional:
        require(ce_shannon, ErrorCode::ModeUnsupported,
                "closed-form teachers need cross-entropy divergence and Shannon entropy");
        break;
      case TeacherMode::MirrorDescent:
        require(alpha >= 0.0, ErrorCode::ModeUnsupported, "mirror-descent teacher needs alpha >= 0");
        require(teacher_steps >= 1 && teacher_step_size > 0.0, ErrorCode::InvalidArgument,
                "teacher steps and step size must be positive");
        break;
      case TeacherMode::MeanField:
      case TeacherMode::SleepPhase:
        require(ce_shannon && alpha > 0.0, ErrorCode::ModeUnsupported,
                "mean-field and sleep-phase teachers need cross-entropy, Shannon entropy and alpha > 0");
        break;
    }
    if (teacher == TeacherMode::Conditional || teacher == TeacherMode::SleepPhase)
      require(x_marginal.has_value(), ErrorCode::InvalidArgument, "this teacher needs the input marginal");
    if (student == StudentMode::ImportanceSampling) {
      require(alpha == beta && alpha > 0.0, ErrorCode::ModeUnsupported,
              "importance-sampling student needs alpha == beta > 0");
      require(is_samples >= 1, ErrorCode::InvalidArgument, "importance sampling needs at least one sample");
    }
    require(student_steps >= 0 && student_step_size > 0.0, ErrorCode::InvalidArgument,
            "student steps must be >= 0 and step size > 0");
    require(stopping.max_iters >= 1 && stopping.patience >= 1 && stopping.tol >= 0.0, ErrorCode::InvalidArgument,
            "invalid stopping rule");
  }
};

// ---------------------------------------------------------------------------
// Objective terms and traces

struct ObjectiveTerms {
  double neg_alpha_H = 0.0;
  double beta_D = 0.0;
  double neg_Eqf = 0.0;
  double total() const { return neg_alpha_H + beta_D + neg_Eqf; }
};

inline ObjectiveTerms objective_terms(const Dist& q, const Dist& p, std::span<const double> f, double alpha,
                                      double beta, const DivergenceFn& d, const UncertaintyFn& h = {}) {
  ObjectiveTerms t;
  t.neg_alpha_H = alpha == 0.0 ? 0.0 : -alpha * entropy(q, h);
  t.beta_D = scale_ext(beta, divergence(d, q, p));
  t.neg_Eqf = -expect(q.span(), f);
  return t;
}

struct TraceRecord {
  int iter = 0;
  double neg_alpha_H = 0.0;
  double beta_D = 0.0;
  double neg_Eqf = 0.0;
  double total = 0.0;
  std::optional<double> tv_to_ref;
  double ms = 0.0;
  Vec q;
  Vec theta;
  std::string segment;
  std::map<std::string, double> extras;
};

struct Trace {
  std::vector<TraceRecord> records;
  bool converged = false;
  std::string stop_reason;
  std::vector<std::string> diagnostics;
};

struct RunResult {
  Model model;
  Trace trace;
};

// ---------------------------------------------------------------------------
// Teachers

namespace detail {

/// beta log p + f with -inf absorbing and beta = 0 ignoring p entirely.
inline Vec tilt_scores(const Dist& p, std::span<const double> f, double beta) {
  require(f.size() == p.size(), ErrorCode::ShapeMismatch, "experience and model sizes differ");
  Vec raw(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double lp = scale_ext(beta, p.log(t));
    raw[t] = (lp == kNegInf || f[t] == kNegInf) ? kNegInf : lp + f[t];
  }
  return raw;
}

inline Dist argmax_point_mass(const Vec& raw) {
  std::size_t best = raw.size();
  for (std::size_t t = 0; t < raw.size(); ++t)
    if (raw[t] != kNegInf && (best == raw.size() || raw[t] > raw[best])) best = t;
  require(best < raw.size(), ErrorCode::AllNegInfinity, "every tilted score is -inf");
  return Dist::point_mass(raw.size(), best);
}

inline Dist tempered(const Vec& raw, double alpha) {
  if (alpha == 0.0) return argmax_point_mass(raw);
  Vec scores(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) scores[t] = raw[t] == kNegInf ? kNegInf : raw[t] / alpha;
  return normalize_log(scores);
}

}  // namespace detail

/// q(t) ∝ exp{(beta log p(t) + f(t)) / alpha}. alpha = 0 is the
/// zero-temperature limit: a point mass on the lowest-index maximizer.
inline Dist teacher_closed_form(const Dist& p, std::span<const double> f, double alpha, double beta) {
  return detail::tempered(detail::tilt_scores(p, f, beta), alpha);
}

/// q(x, y) = m(x) q(y|x) with q(y|x) ∝ exp{(beta log p(x, y) + f(x, y)) / alpha}
/// row by row; pair index t = x * |Y| + y.
inline Dist teacher_conditional(const Dist& p, std::span<const double> f, const Dist& x_marginal, double alpha,
                                double beta) {
  const std::size_t nx = x_marginal.size();
  require(nx >= 1 && p.size() % nx == 0, ErrorCode::ShapeMismatch, "input marginal does not divide the domain");
  const std::size_t ny = p.size() / nx;
  const Vec raw = detail::tilt_scores(p, f, beta);
  Vec q(p.size(), 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    if (x_marginal[x] == 0.0) continue;
    const Vec row(raw.begin() + static_cast<std::ptrdiff_t>(x * ny), raw.begin() + static_cast<std::ptrdiff_t>((x + 1) * ny));
    const Dist cond = detail::tempered(row, alpha);
    for (std::size_t y = 0; y < ny; ++y) q[x * ny + y] = x_marginal[x] * cond[y];
  }
  return Dist::from_probs(std::move(q));
}

struct TeacherResult {
  Dist q = Dist::uniform(1);
  int iterations = 0;
  Vec objective;  // F(q) after each accepted step, starting value first
  bool converged = false;
  std::string diagnostic;
};

namespace detail {

inline double uncertainty_grad(double q, const UncertaintyFn& h) {
  if (h.kind == UncertaintyFn::Kind::Shannon) return -std::log(q) - 1.0;
  return -h.index * std::pow(q, h.index - 1.0) / (h.index - 1.0);
}

/// q-gradient of the inner objective on the support mask.
inline Vec inner_gradient(const Dist& q, const Dist& p, std::span<const double> f, double alpha, double beta,
                          const DivergenceFn& d, const UncertaintyFn& h, const std::vector<bool>& mask) {
  const std::size_t n = q.size();
  Vec g(n, 0.0);
  Vec dg;
  if (d.kind == DivergenceFn::Kind::W1) dg = divergence_grad_q(d, q, p);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    double dd = 0.0;
    switch (d.kind) {
      case DivergenceFn::Kind::CrossEntropy: dd = -p.log(i); break;
      case DivergenceFn::Kind::KL: dd = std::log(q[i]) - p.log(i) + 1.0; break;
      case DivergenceFn::Kind::JS: dd = 0.5 * std::log(2.0 * q[i] / (q[i] + p[i])); break;
      case DivergenceFn::Kind::W1: dd = dg[i]; break;
    }
    g[i] = (alpha == 0.0 ? 0.0 : -alpha * uncertainty_grad(q[i], h)) + (beta == 0.0 ? 0.0 : beta * dd) - f[i];
  }
  return g;
}

}  // namespace detail

/// Exponentiated-gradient descent on -alpha H(q) + beta D(q, p) - E_q[f] over
/// the simplex, restricted to configurations where the objective is finite.
/// Steps that raise the objective are halved up to 30 times.
inline TeacherResult teacher_mirror_descent(const Dist& p, std::span<const double> f, double alpha, double beta,
                                            const DivergenceFn& d, const UncertaintyFn& h = {}, int steps = 2000,
                                            double step_size = 1.0, double tol = 1e-14) {
  require(f.size() == p.size(), ErrorCode::ShapeMismatch, "experience and model sizes differ");
  require(alpha >= 0.0, ErrorCode::ModeUnsupported, "mirror-descent teacher needs alpha >= 0");
  const std::size_t n = p.size();
  const bool needs_p_support =
      beta > 0.0 && (d.kind == DivergenceFn::Kind::CrossEntropy || d.kind == DivergenceFn::Kind::KL);
  std::vector<bool> mask(n);
  Vec start(n);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = f[i] != kNegInf && (!needs_p_support || p[i] > 0.0);
    start[i] = mask[i] ? 0.0 : kNegInf;
  }
  TeacherResult r;
  r.q = normalize_log(start);
  auto objective = [&](const Dist& q) { return objective_terms(q, p, f, alpha, beta, d, h).total(); };
  double current = objective(r.q);
  r.objective.push_back(current);
  int calm = 0;
  for (int it = 0; it < steps; ++it) {
    const Vec g = detail::inner_gradient(r.q, p, f, alpha, beta, d, h, mask);
    double eta = step_size;
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, eta *= 0.5) {
      Vec scores(n);
      for (std::size_t i = 0; i < n; ++i) scores[i] = mask[i] ? r.q.log(i) - eta * g[i] : kNegInf;
      Dist cand = normalize_log(scores);
      const double value = objective(cand);
      if (value <= current) {
        const double delta = current - value;
        r.q = std::move(cand);
        current = value;
        accepted = true;
        calm = delta <= tol * std::max(1.0, std::abs(current)) ? calm + 1 : 0;
        break;
      }
    }
    r.iterations = it + 1;
    if (!accepted) {
      r.converged = true;  // no descent direction left at machine precision
      return r;
    }
    r.objective.push_back(current);
    if (calm >= 3) {
      r.converged = true;
      return r;
    }
  }
  r.diagnostic = "mirror descent stopped after " + std::to_string(steps) + " steps";
  return r;
}

// ---------------------------------------------------------------------------
// Mean-field teacher

struct MeanFieldResult {
  Dist qx = Dist::uniform(1);
  Dist qy = Dist::uniform(1);
  Dist q = Dist::uniform(1);
  Vec free_energy;  // initial value, then one entry per sweep
};

/// Free energy of a joint q: -alpha H(q) - E_q[beta log p + f].
inline double free_energy(const Dist& q, const Dist& p, std::span<const double> f, double alpha, double beta) {
  return objective_terms(q, p, f, alpha, beta, DivergenceFn::cross_entropy()).total();
}

inline Dist product_dist(const Dist& qx, const Dist& qy) {
  Vec q(qx.size() * qy.size());
  for (std::size_t x = 0; x < qx.size(); ++x)
    for (std::size_t y = 0; y < qy.size(); ++y) q[x * qy.size() + y] = qx[x] * qy[y];
  return Dist::from_probs(std::move(q));
}

/// Coordinate updates q_x ∝ exp{E_{q_y}[s(x, .)] / alpha}, then q_y likewise,
/// with s = beta log p + f on the |X| x |Y| product domain.
inline MeanFieldResult mean_field_teacher(const Dist& p, std::span<const double> f, std::size_t nx, std::size_t ny,
                                          double alpha, double beta, int sweeps) {
  require(nx * ny == p.size(), ErrorCode::ShapeMismatch, "factor sizes do not match the domain");
  require(alpha > 0.0, ErrorCode::InvalidArgument, "mean-field teacher needs alpha > 0");
  require(sweeps >= 1, ErrorCode::InvalidArgument, "sweeps must be >= 1");
  const Vec s = detail::tilt_scores(p, f, beta);
  MeanFieldResult r{Dist::uniform(nx), Dist::uniform(ny), Dist::uniform(nx * ny), {}};
  auto energy = [&](const Dist& qx, const Dist& qy) { return free_energy(product_dist(qx, qy), p, f, alpha, beta); };
  r.free_energy.push_back(energy(r.qx, r.qy));
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Vec sx(nx), sy(ny);
    for (std::size_t x = 0; x < nx; ++x) {
      Vec row(ny);
      for (std::size_t y = 0; y < ny; ++y) row[y] = s[x * ny + y];
      sx[x] = expect(r.qy.span(), row) / alpha;
    }
    r.qx = normalize_log(sx);
    for (std::size_t y = 0; y < ny; ++y) {
      Vec col(nx);
      for (std::size_t x = 0; x < nx; ++x) col[x] = s[x * ny + y];
      sy[y] = expect(r.qx.span(), col) / alpha;
    }
    r.qy = normalize_log(sy);
    r.free_energy.push_back(energy(r.qx, r.qy));
  }
  r.q = product_dist(r.qx, r.qy);
  return r;
}

// ---------------------------------------------------------------------------
// Sleep-phase teacher

enum class SleepFamily {
  Tabular,      // one free logit row per input
  TiedRows,     // a single logit row shared by every input
  UniformOnly,  // the singleton {uniform}
};

struct SleepResult {
  ConditionalSoftmaxModel q;
  double objective = 0.0;  // sum_x w(x) KL(p(.|x) || q(.|x))
  Vec trace;
  bool converged = false;
  std::string diagnostic;
};

/// sum_x w(x) KL(p_theta(y|x) || q(y|x)).
inline double sleep_objective(const MixtureModel& m, const Dist& x_weights, const ConditionalSoftmaxModel& q) {
  double acc = 0.0;
  for (std::size_t x = 0; x < m.nx; ++x) {
    if (x_weights[x] == 0.0) continue;
    acc += x_weights[x] * divergence(DivergenceFn::kl(), posterior(m, x), q.row(x));
  }
  return acc;
}

/// Gradient descent on the sleep objective over the q family. Each row's
/// gradient w(x) (q - p) is divided by w(x), which leaves the per-row
/// minimizers unchanged and equalizes row conditioning.
inline SleepResult sleep_phase_teacher(const MixtureModel& m, const Dist& x_weights, ConditionalSoftmaxModel q,
                                       SleepFamily family = SleepFamily::Tabular, int steps = 2000,
                                       double step_size = 1.0, double tol = 1e-15) {
  require(x_weights.size() == m.nx && q.nx == m.nx && q.ny == m.k, ErrorCode::ShapeMismatch,
          "q family shape does not match the mixture");
  const std::size_t nx = m.nx, k = m.k;
  if (family == SleepFamily::UniformOnly) q.theta.assign(nx * k, 0.0);
  std::vector<Dist> post;
  for (std::size_t x = 0; x < nx; ++x) post.push_back(x_weights[x] > 0.0 ? posterior(m, x) : Dist::uniform(k));
  SleepResult r{q, sleep_objective(m, x_weights, q), {}, false, {}};
  r.trace.push_back(r.objective);
  if (family == SleepFamily::UniformOnly) {
    r.converged = true;
    return r;
  }
  if (family == SleepFamily::TiedRows)
    for (std::size_t x = 1; x < nx; ++x)
      for (std::size_t y = 0; y < k; ++y) r.q.theta[x * k + y] = r.q.theta[y];
  for (int it = 0; it < steps; ++it) {
    ConditionalSoftmaxModel next = r.q;
    if (family == SleepFamily::Tabular) {
      for (std::size_t x = 0; x < nx; ++x) {
        if (x_weights[x] == 0.0) continue;
        const Dist row = r.q.row(x);
        for (std::size_t y = 0; y < k; ++y) next.theta[x * k + y] -= step_size * (row[y] - post[x][y]);
      }
    } else {
      const Dist row = r.q.row(0);
      Vec g(k, 0.0);
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < k; ++y) g[y] += x_weights[x] * (row[y] - post[x][y]);
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < k; ++y) next.theta[x * k + y] = r.q.theta[y] - step_size * g[y];
    }
    const double value = sleep_objective(m, x_weights, next);
    const double delta = r.objective - value;
    r.q = std::move(next);
    r.objective = value;
    r.trace.push_back(value);
    if (std::abs(delta) <= tol) {
      r.converged = true;
      return r;
    }
  }
  r.diagnostic = "sleep phase stopped after " + std::to_string(steps) + " steps";
  return r;
}

/// Minimizer of sum_x w(x) KL(q || p_theta(.|x)) over a single shared row:
/// q ∝ exp{sum_x w(x) log p(y|x)}.
inline Dist reverse_kl_tied(const MixtureModel& m, const Dist& x_weights) {
  Vec scores(m.k, 0.0);
  for (std::size_t x = 0; x < m.nx; ++x) {
    if (x_weights[x] == 0.0) continue;
    const Dist post = posterior(m, x);
    for (std::size_t y = 0; y < m.k; ++y)
      scores[y] = (scores[y] == kNegInf || post.log(y) == kNegInf) ? kNegInf : scores[y] + x_weights[x] * post.log(y);
  }
  return normalize_log(scores);
}

// ---------------------------------------------------------------------------
// Students

/// Ascent direction of beta E_q[log p_theta] (+ E_q[f_theta] when the
/// experience is differentiated).
inline Vec student_gradient(const Dist& q, const Model& model, const SEConfig& cfg, const ExperienceFn& f) {
  Vec g = grad_expected_log_prob(model, q);
  for (double& v : g) v *= cfg.beta;
  if (cfg.differentiate_experience) {
    const Vec theta = params(model);
    const Vec gf = f.expectation_grad(q, theta);
    require(gf.size() == g.size(), ErrorCode::ShapeMismatch, "experience gradient has the wrong size");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gf[i];
  }
  return g;
}

struct ISGradient {
  Vec grad;
  Vec stderr_;  // delta-method standard error per coordinate
  Dist q_hat = Dist::uniform(1);
};

/// Self-normalized importance estimate of d/dtheta E_q[log p_theta] with
/// q ∝ p_theta exp{f / alpha}, drawing n samples from p_theta.
inline ISGradient importance_sampling_gradient(const Model& model, std::span<const double> f, double alpha, int n,
                                               Xoshiro256& rng) {
  require(n >= 1, ErrorCode::InvalidArgument, "importance sampling needs at least one sample");
  require(alpha > 0.0, ErrorCode::InvalidArgument, "importance sampling needs alpha > 0");
  const Dist p = joint(model);
  require(f.size() == p.size(), ErrorCode::ShapeMismatch, "experience and model sizes differ");
  double fmax = kNegInf;
  for (std::size_t t = 0; t < p.size(); ++t)
    if (p[t] > 0.0) fmax = std::max(fmax, f[t]);
  require(fmax != kNegInf, ErrorCode::AllZeroWeights, "experience is -inf on the model support");
  std::vector<std::size_t> draws(static_cast<std::size_t>(n));
  Vec w(draws.size());
  Vec mass(p.size(), 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    draws[i] = rng.categorical(p.span());
    w[i] = f[draws[i]] == kNegInf ? 0.0 : std::exp((f[draws[i]] - fmax) / alpha);
    mass[draws[i]] += w[i];
    wsum += w[i];
  }
  require(wsum > 0.0, ErrorCode::AllZeroWeights, "every importance weight vanished");
  ISGradient out;
  out.q_hat = Dist::from_weights(mass);
  out.grad = grad_expected_log_prob(model, out.q_hat);
  // Per-sample score vectors are gradients of log p at a point mass.
  std::map<std::size_t, Vec> score;
  for (std::size_t t = 0; t < p.size(); ++t)
    if (mass[t] > 0.0) score[t] = grad_expected_log_prob(model, Dist::point_mass(p.size(), t));
  out.stderr_.assign(out.grad.size(), 0.0);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const Vec& s = score[draws[i]];
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double r = w[i] * (s[j] - out.grad[j]);
      out.stderr_[j] += r * r;
    }
  }
  for (double& v : out.stderr_) v = std::sqrt(v) / wsum;
  return out;
}

namespace detail {

/// Backtracking ascent on beta E_q[log p_theta] + E_q[f_theta].
inline Model differentiated_fit(const Model& model, const Dist& q, const SEConfig& cfg, const ExperienceFn& f) {
  auto value = [&](const Model& m) {
    const double ll = expect(q.span(), joint(m).logs());
    return scale_ext(cfg.beta, ll) + expect(q.span(), f.evaluate(params(m)));
  };
  Model current = model;
  double best = value(current);
  for (int s = 0; s < cfg.student_steps; ++s) {
    const Vec g = student_gradient(q, current, cfg, f);
    detail::check_finite_gradient(g);
    double eta = cfg.student_step_size;
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, eta *= 0.5) {
      Vec theta = params(current);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eta * g[i];
      Model cand = with_params(current, std::move(theta));
      const double v = value(cand);
      if (v >= best) {
        current = std::move(cand);
        best = v;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return current;
}

}  // namespace detail

/// theta update toward q. Exact installs argmin_theta D(q, p_theta) in closed
/// form; gradient runs the backtracking fit; importance sampling replaces q by
/// a self-normalized weighted sample from p_theta.
inline Model student_step(const Dist& q, const Model& model, const SEConfig& cfg, const ExperienceFn& f,
                          std::span<const double> fvals, Xoshiro256& rng) {
  const bool likelihood_divergence =
      cfg.divergence.kind == DivergenceFn::Kind::CrossEntropy || cfg.divergence.kind == DivergenceFn::Kind::KL;
  switch (cfg.student) {
    case StudentMode::Exact:
      if (!likelihood_divergence)
        require(std::holds_alternative<SoftmaxModel>(model), ErrorCode::ModeUnsupported,
                "exact student for JS/W1 needs a fully expressive model");
      return exact_projection(model, q);
    case StudentMode::Gradient:
      if (!likelihood_divergence) {
        require(std::holds_alternative<SoftmaxModel>(model), ErrorCode::ModeUnsupported,
                "gradient student for JS/W1 needs a fully expressive model");
        return exact_projection(model, q);
      }
      if (cfg.differentiate_experience) return detail::differentiated_fit(model, q, cfg, f);
      return fit_to(model, q, cfg.student_steps, cfg.student_step_size);
    case StudentMode::ImportanceSampling: {
      require(cfg.alpha == cfg.beta, ErrorCode::ModeUnsupported, "importance-sampling student needs alpha == beta");
      const ISGradient is = importance_sampling_gradient(model, fvals, cfg.alpha, cfg.is_samples, rng);
      return fit_to(model, is.q_hat, cfg.student_steps, cfg.student_step_size);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Alternation

namespace detail {

struct LoopState {
  std::optional<ConditionalSoftmaxModel> sleep_q;
  std::optional<Xoshiro256> rng;
};

inline std::pair<std::size_t, std::size_t> factor_shape(const SEConfig& cfg, const Model& model) {
  if (cfg.factor_x > 0 && cfg.factor_y > 0) return {cfg.factor_x, cfg.factor_y};
  if (const auto* mm = std::get_if<MixtureModel>(&model)) return {mm->nx, mm->k};
  if (const auto* jc = std::get_if<JointConditionalModel>(&model)) return {jc->policy.nx, jc->policy.ny};
  throw Error(ErrorCode::InvalidArgument, "mean-field teacher needs factor sizes");
}

inline Dist teacher_step(const SEConfig& cfg, const Model& model, const Dist& p, const Vec& fvals, LoopState& state,
                         Trace& trace) {
  switch (cfg.teacher) {
    case TeacherMode::ClosedForm:
      return teacher_closed_form(p, fvals, cfg.alpha, cfg.beta);
    case TeacherMode::Conditional:
      return teacher_conditional(p, fvals, *cfg.x_marginal, cfg.alpha, cfg.beta);
    case TeacherMode::MirrorDescent: {
      TeacherResult r = teacher_mirror_descent(p, fvals, cfg.alpha, cfg.beta, cfg.divergence, cfg.uncertainty,
                                               cfg.teacher_steps, cfg.teacher_step_size, cfg.teacher_tol);
      if (!r.converged) trace.diagnostics.push_back("NonConvergence: " + r.diagnostic);
      return r.q;
    }
    case TeacherMode::MeanField: {
      const auto [nx, ny] = factor_shape(cfg, model);
      return mean_field_teacher(p, fvals, nx, ny, cfg.alpha, cfg.beta, cfg.mean_field_sweeps).q;
    }
    case TeacherMode::SleepPhase: {
      const auto* mm = std::get_if<MixtureModel>(&model);
      require(mm != nullptr, ErrorCode::ModeUnsupported, "sleep-phase teacher needs a mixture model");
      if (!state.sleep_q) state.sleep_q = ConditionalSoftmaxModel::zeros(mm->nx, mm->k);
      SleepResult r = sleep_phase_teacher(*mm, *cfg.x_marginal, *state.sleep_q, SleepFamily::Tabular, cfg.sleep_steps,
                                          cfg.sleep_step_size);
      if (!r.converged) trace.diagnostics.push_back("NonConvergence: " + r.diagnostic);
      state.sleep_q = r.q;
      Vec q(p.size());
      for (std::size_t x = 0; x < mm->nx; ++x) {
        const Dist row = r.q.row(x);
        for (std::size_t y = 0; y < mm->k; ++y) q[x * mm->k + y] = (*cfg.x_marginal)[x] * row[y];
      }
      return Dist::from_probs(std::move(q));
    }
  }
  return p;
}

/// One teacher step followed by one student step; returns the trace record.
inline TraceRecord iterate(const SEConfig& cfg, Model& model, const ExperienceFn& f, LoopState& state, int iter,
                           Trace& trace) {
  const auto start = std::chrono::steady_clock::now();
  require(f.size() == domain_size(model), ErrorCode::DomainMismatch, "experience and model domains differ");
  if (!state.rng) state.rng.emplace(cfg.seed);
  const Vec theta = params(model);
  const Vec fvals = f.evaluate(theta);
  const Dist p = joint(model);
  const Dist q = teacher_step(cfg, model, p, fvals, state, trace);
  model = student_step(q, model, cfg, f, fvals, *state.rng);
  const Dist p_new = joint(model);
  const ObjectiveTerms terms = objective_terms(q, p_new, fvals, cfg.alpha, cfg.beta, cfg.divergence, cfg.uncertainty);
  TraceRecord rec;
  rec.iter = iter;
  rec.neg_alpha_H = terms.neg_alpha_H;
  rec.beta_D = terms.beta_D;
  rec.neg_Eqf = terms.neg_Eqf;
  rec.total = terms.total();
  if (cfg.reference) rec.tv_to_ref = tv_distance(p_new, *cfg.reference);
  rec.q = q.probs();
  rec.theta = params(model);
  rec.segment = cfg.label;
  rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Tracks consecutive small objective changes.
struct StopTracker {
  std::optional<double> previous;
  int calm = 0;

  bool update(double total, const StoppingRule& rule) {
    if (previous && std::isfinite(total) && std::isfinite(*previous) && std::abs(total - *previous) < rule.tol)
      ++calm;
    else
      calm = 0;
    previous = total;
    return calm >= rule.patience;
  }
};

}  // namespace detail

/// Alternates teacher and student until |delta objective| < tol for
/// `patience` consecutive iterations or max_iters is reached. The trace
/// objective is evaluated at (q^(n+1), theta^(n+1)) with the experience the
/// teacher used.
inline RunResult run(const SEConfig& cfg, Model model, const ExperienceFn& f) {
  cfg.validate();
  RunResult out{std::move(model), {}};
  detail::LoopState state;
  detail::StopTracker stop;
  for (int iter = 0; iter < cfg.stopping.max_iters; ++iter) {
    out.trace.records.push_back(detail::iterate(cfg, out.model, f, state, iter, out.trace));
    if (stop.update(out.trace.records.back().total, cfg.stopping)) {
      out.trace.converged = true;
      out.trace.stop_reason = "objective_tolerance";
      return out;
    }
  }
  out.trace.stop_reason = "max_iters";
  out.trace.diagnostics.push_back("NonConvergence: objective still moving after " +
                                  std::to_string(cfg.stopping.max_iters) + " iterations");
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic schedules

struct PlanSegment {
  int begin = 0;  // first iteration, inclusive
  int end = 0;    // last iteration, exclusive
  SEConfig config;
  ExperienceFn experience;
  std::string label;
};

/// Runs the outer loop segment by segment. Segments must tile [0, end)
/// without gaps or overlaps; the last segment may stop early under its own
/// stopping rule, earlier segments always run their full range.
inline RunResult schedule(const std::vector<PlanSegment>& plan, Model model) {
  require(!plan.empty(), ErrorCode::PlanGap, "plan has no segments");
  int expected = 0;
  for (const auto& seg : plan) {
    require(seg.begin == expected && seg.end > seg.begin, ErrorCode::PlanGap,
            "plan segments must be contiguous from iteration 0 (gap or overlap at " + std::to_string(expected) + ")");
    expected = seg.end;
    seg.config.validate();
  }
  RunResult out{std::move(model), {}};
  detail::LoopState state;
  state.rng.emplace(plan.front().config.seed);
  for (std::size_t s = 0; s < plan.size(); ++s) {
    const PlanSegment& seg = plan[s];
    SEConfig cfg = seg.config;
    if (!seg.label.empty()) cfg.label = seg.label;
    const bool last = s + 1 == plan.size();
    detail::StopTracker stop;
    for (int iter = seg.begin; iter < seg.end; ++iter) {
      out.trace.records.push_back(detail::iterate(cfg, out.model, seg.experience, state, iter, out.trace));
      if (stop.update(out.trace.records.back().total, cfg.stopping) && last) {
        out.trace.converged = true;
        out.trace.stop_reason = "objective_tolerance";
        return out;
      }
    }
  }
  out.trace.stop_reason = "plan_complete";
  out.trace.converged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Multiplicative weights

/// p'(t) = p(t) exp{f(t) / alpha} / Z. This is the closed-form teacher with
/// alpha = beta followed by an exact student on the expert simplex; it is
/// evaluated in probability space and falls back to log space when the
/// exponentials leave the double range.
inline Dist mw_update(const Dist& weights, std::span<const double> rewards, double alpha) {
  require(alpha > 0.0, ErrorCode::InvalidArgument, "alpha must be > 0");
  require(rewards.size() == weights.size(), ErrorCode::ShapeMismatch, "reward vector has the wrong size");
  for (double r : rewards) require(std::isfinite(r), ErrorCode::InvalidArgument, "rewards must be finite");
  Vec w(weights.size());
  double z = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) {
    w[t] = weights[t] * std::exp(rewards[t] / alpha);
    z += w[t];
  }
  if (std::isfinite(z) && z >= std::numeric_limits<double>::min()) {
    for (double& v : w) v /= z;
    return Dist::from_normalized(std::move(w));
  }
  const Dist q = teacher_closed_form(weights, rewards, alpha, alpha);
  return joint(exact_projection(SoftmaxModel::from_dist(weights), q));
}

struct MWResult {
  std::vector<Dist> weights;  // p_0 .. p_T
  double expected_reward = 0.0;
  double best_expert_reward = 0.0;
  double regret() const { return best_expert_reward - expected_reward; }
  Trace trace;
};

/// Online loop over a T x K reward table (row tau holds f_tau), uniform start.
inline MWResult mw_run(std::size_t k, const std::vector<Vec>& rewards, double alpha) {
  require(k >= 1, ErrorCode::InvalidArgument, "need at least one expert");
  MWResult out;
  out.weights.push_back(Dist::uniform(k));
  Vec totals(k, 0.0);
  for (std::size_t tau = 0; tau < rewards.size(); ++tau) {
    require(rewards[tau].size() == k, ErrorCode::ShapeMismatch, "reward row has the wrong size");
    const Dist& p = out.weights.back();
    out.expected_reward += expect(p.span(), rewards[tau]);
    for (std::size_t i = 0; i < k; ++i) totals[i] += rewards[tau][i];
    Dist next = mw_update(p, rewards[tau], alpha);
    const ObjectiveTerms terms =
        objective_terms(next, p, rewards[tau], alpha, alpha, DivergenceFn::cross_entropy());
    TraceRecord rec;
    rec.iter = static_cast<int>(tau);
    rec.neg_alpha_H = terms.neg_alpha_H;
    rec.beta_D = terms.beta_D;
    rec.neg_Eqf = terms.neg_Eqf;
    rec.total = terms.total();
    rec.q = next.probs();
    rec.theta = next.logs();
    out.trace.records.push_back(std::move(rec));
    out.weights.push_back(std::move(next));
  }
  out.best_expert_reward = totals.empty() ? 0.0 : *std::max_element(totals.begin(), totals.end());
  out.trace.converged = true;
  out.trace.stop_reason = "horizon";
  return out;
}

}  // namespace sekit
