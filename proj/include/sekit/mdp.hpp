// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact tabular MDP machinery. Q and the discounted visitation measure are
// solved as dense linear systems; above kDirectSolveLimit state-action pairs
// the solver falls back to value iteration.

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "sekit/core.hpp"
#include "sekit/experience.hpp"
#include "sekit/models.hpp"

namespace sekit {

inline constexpr std::size_t kDirectSolveLimit = 4000;
inline constexpr double kBellmanTol = 1e-8;

struct TabularMDP {
  std::size_t states = 0;
  std::size_t actions = 0;
  Vec transition;  // P(s'|s,a) at [(s * A + a) * S + s']
  Vec reward;      // r(s,a) at [s * A + a]
  double gamma = 0.9;
  Dist p0 = Dist::uniform(1);

  std::size_t pairs() const { return states * actions; }
  double p(std::size_t s, std::size_t a, std::size_t next) const { return transition[(s * actions + a) * states + next]; }

  void validate() const {
    require(states >= 1 && actions >= 1, ErrorCode::InvalidArgument, "MDP needs at least one state and action");
    require(transition.size() == pairs() * states, ErrorCode::ShapeMismatch, "transition tensor has the wrong size");
    require(reward.size() == pairs(), ErrorCode::ShapeMismatch, "reward table has the wrong size");
    require(p0.size() == states, ErrorCode::ShapeMismatch, "initial distribution has the wrong size");
    require(gamma >= 0.0 && gamma < 1.0, ErrorCode::InvalidArgument, "discount must lie in [0, 1)");
    for (std::size_t sa = 0; sa < pairs(); ++sa) {
      double sum = 0.0;
      for (std::size_t n = 0; n < states; ++n) {
        const double v = transition[sa * states + n];
        require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument, "transition probabilities must be >= 0");
        sum += v;
      }
      require(std::abs(sum - 1.0) <= kSimplexTol, ErrorCode::InvalidArgument, "transition rows must sum to 1");
    }
    for (double r : reward) require(std::isfinite(r), ErrorCode::InvalidArgument, "rewards must be finite");
  }
};

struct QTable {
  std::size_t states = 0;
  std::size_t actions = 0;
  Vec q;  // [s * A + a]
  Vec v;  // V(s) = sum_a pi(a|s) Q(s,a)
  double bellman_residual = 0.0;

  double operator()(std::size_t s, std::size_t a) const { return q[s * actions + a]; }
};

namespace detail {

inline void check_policy(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy) {
  require(policy.nx == mdp.states && policy.ny == mdp.actions, ErrorCode::ShapeMismatch,
          "policy shape does not match the MDP");
}

/// Row-major (S*A) x (S*A) matrix P(s'|s,a) pi(a'|s').
inline Eigen::MatrixXd state_action_transition(const TabularMDP& mdp, const Vec& pi) {
  const std::size_t n = mdp.pairs(), A = mdp.actions;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t sa = 0; sa < n; ++sa)
    for (std::size_t next = 0; next < mdp.states; ++next) {
      const double pn = mdp.transition[sa * mdp.states + next];
      if (pn == 0.0) continue;
      for (std::size_t a2 = 0; a2 < A; ++a2)
        m(static_cast<Eigen::Index>(sa), static_cast<Eigen::Index>(next * A + a2)) = pn * pi[next * A + a2];
    }
  return m;
}

inline Eigen::VectorXd solve_dense(const Eigen::MatrixXd& lhs, const Eigen::VectorXd& rhs) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
  require(lu.isInvertible(), ErrorCode::SingularSystem, "linear system is singular");
  return lu.solve(rhs);
}

inline Vec to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec q_value_iteration(const TabularMDP& mdp, const Vec& pi, const Vec& reward) {
  const std::size_t S = mdp.states, A = mdp.actions;
  Vec q(mdp.pairs(), 0.0), v(S, 0.0);
  for (int it = 0; it < 1000000; ++it) {
    for (std::size_t s = 0; s < S; ++s) {
      v[s] = 0.0;
      for (std::size_t a = 0; a < A; ++a) v[s] += pi[s * A + a] * q[s * A + a];
    }
    double delta = 0.0;
    for (std::size_t sa = 0; sa < mdp.pairs(); ++sa) {
      double next = reward[sa];
      for (std::size_t n = 0; n < S; ++n) next += mdp.gamma * mdp.transition[sa * S + n] * v[n];
      delta = std::max(delta, std::abs(next - q[sa]));
      q[sa] = next;
    }
    if (delta < 1e-10) return q;
  }
  throw Error(ErrorCode::NonConvergence, "value iteration did not converge");
}

inline QTable q_function_for_reward(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy, const Vec& reward) {
  mdp.validate();
  check_policy(mdp, policy);
  const Vec pi = policy.table();
  const std::size_t S = mdp.states, A = mdp.actions, n = mdp.pairs();
  QTable out{S, A, {}, Vec(S, 0.0), 0.0};
  if (n <= kDirectSolveLimit) {
    const Eigen::MatrixXd m = state_action_transition(mdp, pi);
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) -
                                mdp.gamma * m;
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(reward.data(), static_cast<Eigen::Index>(n));
    out.q = to_vec(solve_dense(lhs, rhs));
  } else {
    out.q = q_value_iteration(mdp, pi, reward);
  }
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) out.v[s] += pi[s * A + a] * out.q[s * A + a];
  for (std::size_t sa = 0; sa < n; ++sa) {
    double target = reward[sa];
    for (std::size_t next = 0; next < S; ++next) target += mdp.gamma * mdp.transition[sa * S + next] * out.v[next];
    out.bellman_residual = std::max(out.bellman_residual, std::abs(out.q[sa] - target));
  }
  return out;
}

}  // namespace detail

/// Q^pi(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) sum_a' pi(a'|s') Q^pi(s',a').
inline QTable q_function(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy) {
  return detail::q_function_for_reward(mdp, policy, mdp.reward);
}

/// mu(s) = sum_t gamma^t p(s_t = s), from mu = p0 + gamma P_pi^T mu.
inline Vec visitation(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy) {
  mdp.validate();
  detail::check_policy(mdp, policy);
  const Vec pi = policy.table();
  const std::size_t S = mdp.states, A = mdp.actions;
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t n = 0; n < S; ++n)
        p_pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) += pi[s * A + a] * mdp.p(s, a, n);
  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S)) - mdp.gamma * p_pi.transpose();
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(mdp.p0.probs().data(), static_cast<Eigen::Index>(S));
  return detail::to_vec(detail::solve_dense(lhs, rhs));
}

/// J(theta) = sum_s p0(s) sum_a pi(a|s) Q(s,a).
inline double policy_value(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy) {
  const QTable q = q_function(mdp, policy);
  double j = 0.0;
  for (std::size_t s = 0; s < mdp.states; ++s) j += mdp.p0[s] * q.v[s];
  return j;
}

/// Policy-gradient theorem: d/dtheta_{s,b} J = mu(s) pi(b|s) (Q(s,b) - V(s)).
inline Vec exact_policy_gradient(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy) {
  const QTable q = q_function(mdp, policy);
  const Vec mu = visitation(mdp, policy);
  const Vec pi = policy.table();
  const std::size_t A = mdp.actions;
  Vec g(mdp.pairs());
  for (std::size_t s = 0; s < mdp.states; ++s)
    for (std::size_t b = 0; b < A; ++b) g[s * A + b] = mu[s] * pi[s * A + b] * (q(s, b) - q.v[s]);
  return g;
}

/// d/dtheta sum_{s,a} c(s,a) Q^theta(s,a), by the adjoint of the Bellman
/// system: lambda = (I - gamma P Pi)^{-T} c, then each policy logit collects
/// the discounted adjoint flow into its state times the advantage.
inline Vec grad_weighted_q(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy, std::span<const double> c,
                           const Vec& reward) {
  require(c.size() == mdp.pairs(), ErrorCode::ShapeMismatch, "weight table has the wrong size");
  const QTable q = detail::q_function_for_reward(mdp, policy, reward);
  const Vec pi = policy.table();
  const std::size_t S = mdp.states, A = mdp.actions, n = mdp.pairs();
  const Eigen::MatrixXd m = detail::state_action_transition(mdp, pi);
  const Eigen::MatrixXd lhs_t =
      (Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) - mdp.gamma * m).transpose();
  const Eigen::VectorXd lambda =
      detail::solve_dense(lhs_t, Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(n)));
  Vec inflow(S, 0.0);
  for (std::size_t sa = 0; sa < n; ++sa)
    for (std::size_t next = 0; next < S; ++next)
      inflow[next] += mdp.gamma * lambda(static_cast<Eigen::Index>(sa)) * mdp.transition[sa * S + next];
  Vec g(n);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t b = 0; b < A; ++b) g[s * A + b] = inflow[s] * pi[s * A + b] * (q(s, b) - q.v[s]);
  return g;
}

// ---------------------------------------------------------------------------
// Reward experience

enum class RewardMode {
  LogQ,              // f = log Q
  Q,                 // f = Q
  LogQPlusIntrinsic  // f = log(Q + Q_in)
};

struct RewardDiagnostics {
  int evaluations = 0;
  int offset_applications = 0;
  double min_q = kInf;
};

struct RewardOptions {
  RewardMode mode = RewardMode::LogQ;
  Vec intrinsic;        // r_in(s,a); empty means none
  double offset = 0.0;  // shifts r -> r + offset when min Q <= 0 in a log mode
  std::shared_ptr<RewardDiagnostics> diagnostics;
};

namespace detail {

struct RewardEvaluation {
  Vec reward;  // effective reward used for Q
  QTable q;
};

inline RewardEvaluation evaluate_reward(const TabularMDP& mdp, const ConditionalSoftmaxModel& policy,
                                        const RewardOptions& opts) {
  Vec reward = mdp.reward;
  if (opts.mode == RewardMode::LogQPlusIntrinsic && !opts.intrinsic.empty()) {
    require(opts.intrinsic.size() == reward.size(), ErrorCode::ShapeMismatch, "intrinsic reward has the wrong size");
    for (std::size_t i = 0; i < reward.size(); ++i) reward[i] += opts.intrinsic[i];
  }
  QTable q = q_function_for_reward(mdp, policy, reward);
  const bool log_mode = opts.mode != RewardMode::Q;
  double min_q = *std::min_element(q.q.begin(), q.q.end());
  bool shifted = false;
  if (log_mode && min_q <= 0.0 && opts.offset > 0.0) {
    for (double& r : reward) r += opts.offset;
    q = q_function_for_reward(mdp, policy, reward);
    min_q = *std::min_element(q.q.begin(), q.q.end());
    shifted = true;
  }
  if (opts.diagnostics) {
    ++opts.diagnostics->evaluations;
    if (shifted) ++opts.diagnostics->offset_applications;
    opts.diagnostics->min_q = std::min(opts.diagnostics->min_q, min_q);
  }
  require(!log_mode || min_q > 0.0, ErrorCode::NonPositiveQ, "log-Q experience needs Q > 0 everywhere");
  return {std::move(reward), std::move(q)};
}

}  // namespace detail

/// Theta-dependent reward experience over the state-action domain; theta is
/// the flat policy logit table. Q is recomputed from theta on every call.
inline ExperienceFn f_reward(const TabularMDP& mdp, RewardOptions opts = {}) {
  mdp.validate();
  auto shared_mdp = std::make_shared<const TabularMDP>(mdp);
  auto shared_opts = std::make_shared<const RewardOptions>(std::move(opts));
  auto policy_of = [shared_mdp](std::span<const double> theta) {
    require(theta.size() == shared_mdp->pairs(), ErrorCode::ShapeMismatch, "reward experience needs policy logits");
    return ConditionalSoftmaxModel{shared_mdp->states, shared_mdp->actions, Vec(theta.begin(), theta.end())};
  };
  auto eval = [shared_mdp, shared_opts, policy_of](std::span<const double> theta) {
    const auto res = detail::evaluate_reward(*shared_mdp, policy_of(theta), *shared_opts);
    if (shared_opts->mode == RewardMode::Q) return res.q.q;
    Vec f(res.q.q.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::log(res.q.q[i]);
    return f;
  };
  auto grad = [shared_mdp, shared_opts, policy_of](const Dist& q, std::span<const double> theta) {
    const auto policy = policy_of(theta);
    const auto res = detail::evaluate_reward(*shared_mdp, policy, *shared_opts);
    Vec c(q.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i] = shared_opts->mode == RewardMode::Q ? q[i] : q[i] / res.q.q[i];
    return grad_weighted_q(*shared_mdp, policy, c, res.reward);
  };
  return ExperienceFn(mdp.pairs(), std::move(eval), true, std::move(grad));
}

}  // namespace sekit
