// SPDX-License-Identifier: Apache-2.0
#pragma once

// Named configurations of the solver that reproduce classical algorithms, the
// problem bundles they run on, and equivalence checks against the reference
// implementations in oracles.hpp.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sekit/adversarial.hpp"
#include "sekit/core.hpp"
#include "sekit/experience.hpp"
#include "sekit/mdp.hpp"
#include "sekit/models.hpp"
#include "sekit/oracles.hpp"
#include "sekit/solver.hpp"

namespace sekit {

// ---------------------------------------------------------------------------
// Problem bundles

/// Everything a recipe may consume. Each recipe reads a subset and checks that
/// its part is present before running.
struct Problem {
  std::string name;
  /// Pair shape of the configuration space; nx * ny must match the data when
  /// the data lives on pairs.
  std::size_t nx = 0, ny = 0;

  std::optional<Dataset> data;
  Vec weights;  // per-configuration importance weights
  Vec kernel;   // row-major |T| x |T| augmentation kernel, row t* holds a_{t*}(.)
  std::size_t latent = 2;  // mixture components for the unsupervised recipe

  std::optional<TabularMDP> mdp;
  Vec intrinsic;  // r_in(s, a)

  std::optional<SoftLogicExpr> rule;

  std::optional<ConditionalSoftmaxModel> source;

  std::optional<Dataset> pool;
  std::vector<std::size_t> labels;  // deterministic label oracle y = labels[x]
  Vec informativeness;

  std::vector<Vec> rewards;  // expert stream, one row per round

  std::optional<Dist> p_data;
  Vec coords;  // ordered 1-D ground coordinates

  /// Initial model parameters in the recipe model's flat layout.
  std::optional<Vec> init;
  /// Target for the trace's tv_to_ref column.
  std::optional<Dist> reference;
};

enum class Requirement { Dataset, PairShape, Weights, Kernel, Mdp, Rule, SourceModel, Pool, ExpertStream, DataDistribution };

inline std::string to_string(Requirement r) {
  switch (r) {
    case Requirement::Dataset: return "dataset";
    case Requirement::PairShape: return "pair shape (nx, ny)";
    case Requirement::Weights: return "weights";
    case Requirement::Kernel: return "kernel";
    case Requirement::Mdp: return "mdp";
    case Requirement::Rule: return "rule";
    case Requirement::SourceModel: return "source model";
    case Requirement::Pool: return "pool and label oracle";
    case Requirement::ExpertStream: return "expert stream";
    case Requirement::DataDistribution: return "data distribution";
  }
  return "unknown";
}

inline bool satisfied(const Problem& pb, Requirement r) {
  switch (r) {
    case Requirement::Dataset: return pb.data.has_value();
    case Requirement::PairShape: return pb.nx > 0 && pb.ny > 0;
    case Requirement::Weights: return !pb.weights.empty();
    case Requirement::Kernel: return !pb.kernel.empty();
    case Requirement::Mdp: return pb.mdp.has_value();
    case Requirement::Rule: return pb.rule.has_value();
    case Requirement::SourceModel: return pb.source.has_value();
    case Requirement::Pool: return pb.pool.has_value() && !pb.labels.empty() && !pb.informativeness.empty();
    case Requirement::ExpertStream: return !pb.rewards.empty();
    case Requirement::DataDistribution: return pb.p_data.has_value() || pb.data.has_value();
  }
  return false;
}

// ---------------------------------------------------------------------------
// Recipes

enum class Driver { Standard, Adversarial, Online, Schedule };

/// Knobs outside SEConfig.
struct RecipeSettings {
  // adversarial loops
  int disc_steps = 5;
  double disc_step_size = 1.0;
  double gen_step_size = 1.0;
  GeneratorLoss generator_loss = GeneratorLoss::Minimax;
  double lipschitz = 1.0;
  // experience weights
  double rule_weight = 1.0;
  double active_lambda = 1.0;
  bool normalize_informativeness = false;
  double reward_offset = 0.0;
  // schedule segment lengths: data, augmented data, reward
  std::vector<int> segments{20, 20, 40};
  /// Scale of random initial logits drawn from the run seed; 0 means zeros.
  double init_scale = 0.0;
};

struct Prepared {
  Model model;
  ExperienceFn experience;
  SEConfig config;
};

struct Recipe;
using PrepareFn = Prepared (*)(const Recipe&, const Problem&, const SEConfig&, const RecipeSettings&);

struct Recipe {
  std::string name;
  std::vector<std::string> aliases;
  std::string row;  // algorithm the configuration reproduces
  std::string doc;
  Driver driver = Driver::Standard;
  SEConfig config;
  RecipeSettings settings;
  std::vector<Requirement> needs;
  PrepareFn prepare = nullptr;

  void check_bundle(const Problem& pb) const {
    for (Requirement r : needs)
      require(satisfied(pb, r), ErrorCode::ConfigError, "recipe '" + name + "' needs a " + to_string(r));
  }
};

namespace detail {

inline Vec initial_logits(const Problem& pb, std::size_t n, const SEConfig& cfg, const RecipeSettings& s) {
  if (pb.init) {
    require(pb.init->size() == n, ErrorCode::ShapeMismatch, "initial parameters have the wrong size");
    return *pb.init;
  }
  if (s.init_scale <= 0.0) return Vec(n, 0.0);
  Xoshiro256 rng(cfg.seed);
  return random_logits(n, rng, s.init_scale);
}

inline std::size_t flat_size(const Problem& pb) {
  if (pb.nx > 0 && pb.ny > 0) return pb.nx * pb.ny;
  return pb.data ? pb.data->size() : 0;
}

inline Prepared flat_model(const Problem& pb, ExperienceFn f, const SEConfig& cfg, const RecipeSettings& s) {
  const std::size_t n = f.size();
  return {SoftmaxModel{initial_logits(pb, n, cfg, s)}, std::move(f), cfg};
}

inline JointConditionalModel joint_conditional(const Problem& pb, std::size_t nx, std::size_t ny, Dist x_marginal,
                                               const SEConfig& cfg, const RecipeSettings& s) {
  return {ConditionalSoftmaxModel{nx, ny, initial_logits(pb, nx * ny, cfg, s)}, std::move(x_marginal)};
}

inline Dist data_distribution(const Problem& pb) { return pb.p_data ? *pb.p_data : pb.data->empirical(); }

inline Prepared prepare_supervised(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  return flat_model(pb, f_data(*pb.data), cfg, s);
}

inline Prepared prepare_self_supervised(const Recipe&, const Problem& pb, const SEConfig& cfg,
                                        const RecipeSettings& s) {
  require(pb.data->size() == pb.nx * pb.ny, ErrorCode::DomainMismatch, "data must live on the nx * ny pair domain");
  const std::size_t ny = pb.ny;
  const SplitFn split = [ny](std::size_t t, Xoshiro256&) { return std::pair<std::size_t, std::size_t>{t / ny, t % ny}; };
  return flat_model(pb, f_data_self(*pb.data, split, pb.nx, pb.ny, cfg.seed), cfg, s);
}

inline Prepared prepare_unsupervised(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const std::size_t nx = pb.data->size(), k = pb.latent;
  require(k >= 1, ErrorCode::ConfigError, "the mixture needs at least one component");
  SEConfig c = cfg;
  c.x_marginal = pb.data->empirical();
  MixtureModel m;
  if (pb.init) {
    m = std::get<MixtureModel>(with_params(Model{MixtureModel::zeros(k, nx)}, *pb.init));
  } else {
    const Vec v = initial_logits(pb, k + k * nx, cfg, s);
    m = MixtureModel{k, nx, Vec(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k)),
                     Vec(v.begin() + static_cast<std::ptrdiff_t>(k), v.end())};
  }
  return {std::move(m), f_data_unsupervised(*pb.data, k), std::move(c)};
}

inline Prepared prepare_reweighting(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  return flat_model(pb, f_data_weighted(*pb.data, pb.weights), cfg, s);
}

inline Prepared prepare_augmentation(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  return flat_model(pb, f_data_augmented(*pb.data, pb.kernel), cfg, s);
}

inline Prepared prepare_active(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const std::size_t nx = pb.pool->size(), ny = pb.ny;
  require(ny >= 1, ErrorCode::ConfigError, "active learning needs the label count ny");
  require(pb.labels.size() == nx, ErrorCode::ShapeMismatch, "label oracle must cover the pool domain");
  const std::vector<std::size_t> labels = pb.labels;
  const LabelOracle oracle = [labels](std::size_t x, Xoshiro256&) { return labels[x]; };
  ActiveOptions opts;
  opts.lambda = s.active_lambda;
  opts.normalize_u = s.normalize_informativeness;
  opts.seed = cfg.seed;
  return flat_model(pb, f_active(*pb.pool, oracle, pb.informativeness, ny, opts), cfg, s);
}

inline Prepared prepare_rule(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const std::size_t n = flat_size(pb);
  require(n > 0, ErrorCode::ConfigError, "rule recipes need the configuration count (nx, ny or a dataset)");
  return flat_model(pb, combine({{s.rule_weight, f_rule(*pb.rule, n)}}), cfg, s);
}

inline Prepared reward_recipe(const Problem& pb, const SEConfig& cfg, const RecipeSettings& s, RewardMode mode) {
  const TabularMDP& mdp = *pb.mdp;
  RewardOptions opts;
  opts.mode = mode;
  opts.offset = s.reward_offset;
  if (mode == RewardMode::LogQPlusIntrinsic) opts.intrinsic = pb.intrinsic;
  return {joint_conditional(pb, mdp.states, mdp.actions, mdp.p0, cfg, s), f_reward(mdp, std::move(opts)), cfg};
}

inline Prepared prepare_policy_gradient(const Recipe&, const Problem& pb, const SEConfig& cfg,
                                        const RecipeSettings& s) {
  return reward_recipe(pb, cfg, s, RewardMode::LogQ);
}

inline Prepared prepare_intrinsic(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  require(pb.intrinsic.size() == pb.mdp->pairs(), ErrorCode::ConfigError, "intrinsic reward must cover every (s, a)");
  return reward_recipe(pb, cfg, s, RewardMode::LogQPlusIntrinsic);
}

inline Prepared prepare_rl_inference(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  return reward_recipe(pb, cfg, s, RewardMode::Q);
}

inline Prepared prepare_distillation(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const ConditionalSoftmaxModel& src = *pb.source;
  const Dist xm = pb.data->empirical();
  return {joint_conditional(pb, src.nx, src.ny, xm, cfg, s), f_model_mimic(*pb.data, src), cfg};
}

inline Prepared prepare_gan(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const Dist pd = data_distribution(pb);
  ExperienceFn none = ExperienceFn::from_values(Vec(pd.size(), 0.0));
  return {SoftmaxModel{initial_logits(pb, pd.size(), cfg, s)}, std::move(none), cfg};
}

inline Prepared prepare_online(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings&) {
  const std::size_t k = pb.rewards.front().size();
  return {SoftmaxModel::zeros(k), ExperienceFn::from_values(Vec(k, 0.0)), cfg};
}

inline Prepared prepare_schedule(const Recipe&, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const TabularMDP& mdp = *pb.mdp;
  require(pb.data->size() == mdp.pairs(), ErrorCode::DomainMismatch, "data must live on the state-action pairs");
  RewardOptions opts;
  opts.offset = s.reward_offset;
  return {joint_conditional(pb, mdp.states, mdp.actions, mdp.p0, cfg, s), f_reward(mdp, std::move(opts)), cfg};
}

inline SEConfig ce(double alpha, double beta) {
  SEConfig c;
  c.alpha = alpha;
  c.beta = beta;
  return c;
}

inline SEConfig adversarial_se(DivergenceFn d, int iters, double tol) {
  SEConfig c = ce(0.0, 1.0);
  c.divergence = std::move(d);
  c.stopping.max_iters = iters;
  c.stopping.tol = tol;
  return c;
}

inline std::vector<Recipe> build_registry() {
  using R = Requirement;
  std::vector<Recipe> out;
  auto add = [&](Recipe r) { out.push_back(std::move(r)); };

  add({"supervised-mle", {}, "Supervised MLE",
       "Empirical-data experience, cross entropy, alpha = 1, beta = epsilon. The teacher returns the empirical "
       "distribution and the exact student copies it.",
       Driver::Standard, ce(1.0, kEpsilonBeta), {}, {R::Dataset}, prepare_supervised});
  add({"self-supervised-mle", {}, "Self-supervised MLE",
       "Split observations into (x, y) pairs and learn the pair distribution; the default split reads the first "
       "coordinate as x and the second as y on the nx * ny pair domain.",
       Driver::Standard, ce(1.0, kEpsilonBeta), {}, {R::Dataset, R::PairShape}, prepare_self_supervised});
  {
    SEConfig c = ce(1.0, 1.0);
    c.teacher = TeacherMode::Conditional;
    c.stopping.max_iters = 500;
    RecipeSettings s;
    s.init_scale = 1.0;
    add({"unsupervised-mle", {"em"}, "Unsupervised MLE",
         "Expectation maximization for a finite mixture: alpha = beta = 1, q(x, y) = p_data(x) q(y|x), exact "
         "M-step. The latent variable is the mixture component.",
         Driver::Standard, c, s, {R::Dataset}, prepare_unsupervised});
  }
  add({"data-reweighting", {}, "Data re-weighting",
       "Importance-weighted data experience log E[w(t*) 1{t* = t}], alpha = 1, beta = epsilon.", Driver::Standard,
       ce(1.0, kEpsilonBeta), {}, {R::Dataset, R::Weights}, prepare_reweighting});
  add({"data-augmentation", {"raml"}, "Data augmentation",
       "Kernel-smoothed data experience log E[a_{t*}(t)]; with the exponentiated-payoff kernel this is reward-"
       "augmented maximum likelihood.",
       Driver::Standard, ce(1.0, kEpsilonBeta), {}, {R::Dataset, R::Kernel}, prepare_augmentation});
  add({"active-learning", {}, "Active learning",
       "Oracle-labeled pool experience plus lambda times informativeness, alpha = 1, beta = epsilon.",
       Driver::Standard, ce(1.0, kEpsilonBeta), {}, {R::Pool}, prepare_active});
  {
    SEConfig c = ce(1.0, 1.0);
    c.stopping.max_iters = 200;
    add({"posterior-regularization", {}, "Posterior regularization",
         "Soft-logic rule experience, cross entropy, alpha = beta = 1: each teacher step is the model tilted by "
         "exp{rule_weight * rule}.",
         Driver::Standard, c, {}, {R::Rule}, prepare_rule});
    SEConfig u = c;
    u.alpha = std::numeric_limits<double>::quiet_NaN();
    add({"unified-em", {}, "Unified EM",
         "Posterior regularization with a free temperature alpha (any real value, negative included). alpha has no "
         "default and must be set.",
         Driver::Standard, u, {}, {R::Rule}, prepare_rule});
  }
  {
    SEConfig c = ce(1.0, 1.0);
    c.student = StudentMode::Gradient;
    c.differentiate_experience = true;
    c.student_steps = 1;
    c.student_step_size = 0.5;
    // the optimal policy is deterministic and only reached in the limit
    c.stopping.max_iters = 5000;
    c.stopping.tol = 1e-6;
    add({"policy-gradient", {}, "Policy gradient",
         "f = log Q, alpha = beta = 1. The student differentiates through f, which makes its gradient the exact "
         "policy gradient divided by the expected return.",
         Driver::Standard, c, {}, {R::Mdp}, prepare_policy_gradient});
    add({"intrinsic-reward", {}, "Policy gradient with intrinsic reward",
         "f = log(Q + Q_in), where Q_in is the action value of the intrinsic reward under the current policy.",
         Driver::Standard, c, {}, {R::Mdp}, prepare_intrinsic});
    SEConfig r = c;
    r.differentiate_experience = false;
    add({"rl-as-inference", {}, "RL as inference",
         "f = Q, alpha = beta = rho (set both). The teacher is p_theta exp{Q / rho} / Z; the student holds Q "
         "fixed at the teacher's policy.",
         Driver::Standard, r, {}, {R::Mdp}, prepare_rl_inference});
  }
  add({"knowledge-distillation", {}, "Knowledge distillation",
       "f(x, y) = log(p_data(x) p_source(y|x)), alpha = 1, beta = epsilon: the student mimics the source model "
       "on the observed inputs.",
       Driver::Standard, ce(1.0, kEpsilonBeta), {}, {R::Dataset, R::SourceModel}, prepare_distillation});
  add({"vanilla-gan", {}, "Vanilla GAN",
       "Jensen-Shannon divergence, alpha = 0, beta = 1, per-point logistic classifier as the experience; the "
       "generator descends E_p[log(1 - D)].",
       Driver::Adversarial, adversarial_se(DivergenceFn::js(), 5000, 1e-14), {}, {R::DataDistribution}, prepare_gan});
  {
    RecipeSettings s;
    s.disc_step_size = 1e4;
    s.gen_step_size = 0.05;
    add({"wgan", {}, "WGAN",
         "Wasserstein-1 divergence, alpha = 0, beta = 1, critic with bounded successive differences on an ordered "
         "1-D domain.",
         Driver::Adversarial, adversarial_se(DivergenceFn::w1(), 2000, 1e-14), s, {R::DataDistribution}, prepare_gan});
  }
  {
    RecipeSettings s;
    s.disc_step_size = 4.0;
    add({"ppo-gan", {}, "PPO-GAN",
         "KL divergence, alpha = 0, beta = 1: the classifier is trained on importance-reweighted model samples and "
         "the generator is projected onto q = p_theta exp{f} / Z. The Lipschitz bound applies to the classifier "
         "logits.",
         Driver::Adversarial, adversarial_se(DivergenceFn::kl(), 1000, 1e-14), s, {R::DataDistribution}, prepare_gan});
  }
  add({"multiplicative-weights", {"mw"}, "Multiplicative weights",
       "Online experts: f_tau is the round's reward vector, alpha = beta = eta, exact student. Each round is "
       "p <- p exp{f_tau / eta} / Z.",
       Driver::Online, ce(1.0, 1.0), {}, {R::ExpertStream}, prepare_online});
  {
    SEConfig c = ce(1.0, 1.0);
    c.student = StudentMode::Gradient;
    c.differentiate_experience = true;
    c.student_steps = 1;
    c.student_step_size = 0.5;
    add({"interpolation-schedule", {}, "Interpolation schedule",
         "Three segments on one state-action problem: data experience with beta = epsilon, kernel-augmented data "
         "with beta = epsilon, then log Q with the configured alpha and beta.",
         Driver::Schedule, c, {}, {R::Dataset, R::Kernel, R::Mdp}, prepare_schedule});
  }
  return out;
}

}  // namespace detail

/// The immutable recipe table.
inline const std::vector<Recipe>& registry() {
  static const std::vector<Recipe> table = detail::build_registry();
  return table;
}

inline const Recipe& find_recipe(const std::string& name) {
  for (const Recipe& r : registry()) {
    if (r.name == name) return r;
    for (const auto& a : r.aliases)
      if (a == name) return r;
  }
  throw Error(ErrorCode::NotFound, "no recipe named '" + name + "'");
}

// ---------------------------------------------------------------------------
// Running a recipe

struct RecipeOutcome {
  Model model;
  Trace trace;
  std::optional<Discriminator> disc;
};

inline Prepared prepare(const Recipe& r, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  r.check_bundle(pb);
  Prepared p = r.prepare(r, pb, cfg, s);
  if (pb.reference && !p.config.reference) p.config.reference = pb.reference;
  // adversarial loops validate their own configuration
  if (r.driver != Driver::Adversarial) p.config.validate();
  return p;
}

namespace detail {

inline std::vector<PlanSegment> interpolation_plan(const Problem& pb, const Prepared& p, const RecipeSettings& s) {
  require(s.segments.size() == 3, ErrorCode::ConfigError, "the interpolation schedule has three segments");
  for (int len : s.segments) require(len >= 1, ErrorCode::ConfigError, "segment lengths must be >= 1");
  SEConfig data_cfg = p.config;
  data_cfg.alpha = 1.0;
  data_cfg.beta = kEpsilonBeta;
  data_cfg.student = StudentMode::Exact;
  data_cfg.differentiate_experience = false;
  const int a = s.segments[0], b = a + s.segments[1], c = b + s.segments[2];
  return {{0, a, data_cfg, f_data(*pb.data), "data"},
          {a, b, data_cfg, f_data_augmented(*pb.data, pb.kernel), "augmented"},
          {b, c, p.config, p.experience, "reward"}};
}

}  // namespace detail

inline RecipeOutcome run_recipe(const Recipe& r, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  Prepared p = prepare(r, pb, cfg, s);
  switch (r.driver) {
    case Driver::Standard: {
      RunResult res = run(p.config, std::move(p.model), p.experience);
      return {std::move(res.model), std::move(res.trace), std::nullopt};
    }
    case Driver::Adversarial: {
      AdversarialConfig ac;
      ac.se = p.config;
      ac.disc_steps = s.disc_steps;
      ac.disc_step_size = s.disc_step_size;
      ac.gen_step_size = s.gen_step_size;
      ac.generator_loss = s.generator_loss;
      ac.lipschitz = s.lipschitz;
      ac.coords = pb.coords;
      if (ac.se.divergence.kind == DivergenceFn::Kind::W1) ac.se.divergence.coords = pb.coords;
      AdversarialResult res =
          adversarial_run(ac, std::get<SoftmaxModel>(p.model), detail::data_distribution(pb));
      return {std::move(res.model), std::move(res.trace), std::move(res.disc)};
    }
    case Driver::Online: {
      MWResult res = mw_run(pb.rewards.front().size(), pb.rewards, p.config.alpha);
      res.trace.diagnostics.push_back("regret " + std::to_string(res.regret()));
      return {SoftmaxModel::from_dist(res.weights.back()), std::move(res.trace), std::nullopt};
    }
    case Driver::Schedule: {
      RunResult res = schedule(detail::interpolation_plan(pb, p, s), std::move(p.model));
      return {std::move(res.model), std::move(res.trace), std::nullopt};
    }
  }
  throw Error(ErrorCode::ModeUnsupported, "unknown driver");
}

inline RecipeOutcome run_recipe(const Recipe& r, const Problem& pb) { return run_recipe(r, pb, r.config, r.settings); }

// ---------------------------------------------------------------------------
// Equivalence checks

enum class Contract { PerIteration, FixedPoint, GradientDirection };

inline std::string to_string(Contract c) {
  switch (c) {
    case Contract::PerIteration: return "per-iteration";
    case Contract::FixedPoint: return "fixed-point";
    case Contract::GradientDirection: return "gradient-direction";
  }
  return "unknown";
}

struct Oracle {
  std::string name;
  std::vector<std::string> aliases;
  std::string implementation;
  Contract contract;
  std::vector<std::string> recipes;  // compatible recipe names
};

inline const std::vector<Oracle>& oracles() {
  static const std::vector<Oracle> table{
      {"oracle-em", {"em"}, "hand-coded EM for finite mixtures", Contract::PerIteration, {"unsupervised-mle"}},
      {"hedge", {}, "Hedge weight updates", Contract::PerIteration, {"multiplicative-weights"}},
      {"reinforce", {}, "exact REINFORCE gradient by linear solves", Contract::GradientDirection, {"policy-gradient"}},
      {"direct-mle", {}, "frequency counts", Contract::FixedPoint, {"supervised-mle"}},
      {"bayes-posterior", {}, "prior times likelihood over evidence", Contract::PerIteration,
       {"rl-as-inference", "posterior-regularization"}},
      {"gan-optimum", {}, "closed-form optimal discriminator", Contract::FixedPoint, {"vanilla-gan"}},
  };
  return table;
}

inline const Oracle& find_oracle(const std::string& name) {
  for (const Oracle& o : oracles()) {
    if (o.name == name) return o;
    for (const auto& a : o.aliases)
      if (a == name) return o;
  }
  throw Error(ErrorCode::NotFound, "no oracle named '" + name + "'");
}

struct EquivalenceReport {
  std::string recipe;
  std::string oracle;
  Contract contract = Contract::PerIteration;
  bool pass = false;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  std::size_t compared = 0;  // iterations or points compared
  std::map<std::string, double> details;
};

namespace detail {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch, "compared vectors differ in length");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) continue;  // covers matching infinities
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

inline oracle::Mixture to_oracle(const MixtureModel& m) {
  oracle::Mixture o;
  o.weights = m.weights().probs();
  for (std::size_t y = 0; y < m.k; ++y) {
    const Vec c = m.component(y).probs();
    o.emissions.insert(o.emissions.end(), c.begin(), c.end());
  }
  return o;
}

inline oracle::MDP to_oracle(const TabularMDP& m) {
  return {m.states, m.actions, m.transition, m.reward, m.gamma, m.p0.probs()};
}

/// Softmax rows of a flat logit table, written out here so the comparison
/// does not route through the model code under test.
inline Vec row_softmax(const Vec& theta, std::size_t nx, std::size_t ny) {
  Vec out(theta.size());
  for (std::size_t x = 0; x < nx; ++x) {
    double mx = kNegInf;
    for (std::size_t y = 0; y < ny; ++y) mx = std::max(mx, theta[x * ny + y]);
    double z = 0.0;
    for (std::size_t y = 0; y < ny; ++y) z += out[x * ny + y] = std::exp(theta[x * ny + y] - mx);
    for (std::size_t y = 0; y < ny; ++y) out[x * ny + y] /= z;
  }
  return out;
}

inline EquivalenceReport check_em(const Recipe& r, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  Prepared p = prepare(r, pb, cfg, s);
  const MixtureModel init = std::get<MixtureModel>(p.model);
  const RunResult res = run(p.config, p.model, p.experience);
  const Vec emp = pb.data->empirical().probs();
  const auto path = oracle::em(emp, to_oracle(init), static_cast<int>(res.trace.records.size()));
  EquivalenceReport rep;
  double q_dev = 0.0, theta_dev = 0.0, nll_increase = 0.0;
  double previous = oracle::negative_log_likelihood(emp, to_oracle(init));
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& rec = res.trace.records[i];
    q_dev = std::max(q_dev, max_abs_diff(rec.q, path[i].q));
    const oracle::Mixture got = to_oracle(std::get<MixtureModel>(with_params(Model{init}, rec.theta)));
    theta_dev = std::max({theta_dev, max_abs_diff(got.weights, path[i].params.weights),
                          max_abs_diff(got.emissions, path[i].params.emissions)});
    const double nll = oracle::negative_log_likelihood(emp, got);
    nll_increase = std::max(nll_increase, nll - previous);
    previous = nll;
  }
  rep.compared = path.size();
  rep.max_deviation = std::max(q_dev, theta_dev);
  rep.details = {{"q_deviation", q_dev}, {"theta_deviation", theta_dev}, {"max_nll_increase", nll_increase}};
  return rep;
}

inline EquivalenceReport check_hedge(const Problem& pb, const SEConfig& cfg) {
  const std::size_t k = pb.rewards.front().size();
  const MWResult mw = mw_run(k, pb.rewards, cfg.alpha);
  const auto path = oracle::hedge(k, pb.rewards, cfg.alpha);
  EquivalenceReport rep;
  for (std::size_t i = 0; i < path.size(); ++i)
    rep.max_deviation = std::max(rep.max_deviation, max_abs_diff(mw.weights[i].probs(), path[i]));
  rep.compared = path.size();
  rep.details = {{"regret", mw.regret()}};
  return rep;
}

inline EquivalenceReport check_reinforce(const Recipe& r, const Problem& pb, const SEConfig& cfg,
                                         const RecipeSettings& s) {
  Prepared p = prepare(r, pb, cfg, s);
  const Vec theta = params(p.model);
  const Dist q = teacher_closed_form(joint(p.model), p.experience.evaluate(theta), p.config.alpha, p.config.beta);
  const Vec g = student_gradient(q, p.model, p.config, p.experience);
  const TabularMDP& mdp = *pb.mdp;
  const auto ref = oracle::exact_policy_gradient(to_oracle(mdp), row_softmax(theta, mdp.states, mdp.actions));
  double dot = 0.0, gg = 0.0, oo = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * ref.gradient[i], gg += g[i] * g[i], oo += ref.gradient[i] * ref.gradient[i];
  require(gg > 0.0 && oo > 0.0, ErrorCode::InvalidArgument, "policy gradient vanishes at the initial policy");
  const double cosine = dot / std::sqrt(gg * oo);
  const double ratio = std::sqrt(gg / oo);
  const double z = ref.value;  // normalizer of q = p_theta Q / Z
  EquivalenceReport rep;
  rep.compared = g.size();
  rep.details = {{"cosine", cosine}, {"ratio", ratio}, {"inverse_z", 1.0 / z}, {"ratio_times_z", ratio * z}};
  rep.max_deviation = std::max(1.0 - cosine, std::abs(ratio * z - 1.0));
  return rep;
}

inline EquivalenceReport check_direct_mle(const Recipe& r, const Problem& pb, const SEConfig& cfg,
                                          const RecipeSettings& s) {
  const RecipeOutcome out = run_recipe(r, pb, cfg, s);
  Vec counts;
  for (auto c : pb.data->counts()) counts.push_back(static_cast<double>(c));
  const Vec ref = oracle::direct_mle(counts);
  const Vec got = joint(out.model).probs();
  EquivalenceReport rep;
  rep.compared = ref.size();
  rep.max_deviation = max_abs_diff(got, ref);
  rep.details = {{"tv", tv_distance(got, ref)}, {"iterations", static_cast<double>(out.trace.records.size())}};
  return rep;
}

/// Each recorded teacher q against prior = model before the step and
/// likelihood = exp{f / alpha} at alpha = beta.
inline EquivalenceReport check_bayes(const Recipe& r, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  Prepared p = prepare(r, pb, cfg, s);
  require(p.config.alpha == p.config.beta && p.config.alpha > 0.0, ErrorCode::IncompatiblePair,
          "the posterior form needs alpha == beta > 0");
  const double rho = p.config.alpha;
  const Model init = p.model;
  const RunResult res = run(p.config, p.model, p.experience);
  EquivalenceReport rep;
  Vec theta = params(init);
  for (const auto& rec : res.trace.records) {
    Vec prior, log_lik;
    if (pb.mdp) {
      const TabularMDP& mdp = *pb.mdp;
      const Vec pi = row_softmax(theta, mdp.states, mdp.actions);
      const auto ref = oracle::exact_policy_gradient(to_oracle(mdp), pi);
      prior.resize(pi.size());
      for (std::size_t t = 0; t < pi.size(); ++t) prior[t] = mdp.p0[t / mdp.actions] * pi[t];
      log_lik = ref.q;
    } else {
      prior = row_softmax(theta, 1, theta.size());
      log_lik = f_rule(*pb.rule, theta.size()).evaluate(theta);
      for (double& v : log_lik) v *= s.rule_weight;
    }
    double shift = kNegInf;
    for (double v : log_lik) shift = std::max(shift, v / rho);
    Vec lik(log_lik.size());
    for (std::size_t t = 0; t < lik.size(); ++t) lik[t] = std::exp(log_lik[t] / rho - shift);
    rep.max_deviation = std::max(rep.max_deviation, max_abs_diff(rec.q, oracle::bayes_posterior(prior, lik)));
    theta = rec.theta;
    ++rep.compared;
  }
  return rep;
}

inline EquivalenceReport check_gan(const Recipe& r, const Problem& pb, const SEConfig& cfg, const RecipeSettings& s) {
  const RecipeOutcome out = run_recipe(r, pb, cfg, s);
  const Dist pd = data_distribution(pb);
  const Dist p = joint(out.model);
  // Train the final classifier to its optimum against the final model.
  const DiscriminatorUpdate u = discriminator_update(*out.disc, p, pd, 5000, 10.0);
  const Vec ref = oracle::gan_optimal_discriminator(pd.probs(), p.probs());
  EquivalenceReport rep;
  const double disc_dev = max_abs_diff(u.disc.probabilities(), ref);
  const double tv = tv_distance(p, pd);
  rep.compared = ref.size();
  rep.max_deviation = std::max(disc_dev, tv);
  rep.details = {{"discriminator_deviation", disc_dev}, {"tv_to_data", tv}};
  return rep;
}

}  // namespace detail

/// Runs the recipe and the oracle on the same problem and compares them under
/// the oracle's contract. Deterministic given cfg.seed.
inline EquivalenceReport check_equivalence(const Recipe& r, const SEConfig& cfg, const RecipeSettings& s,
                                           const Oracle& o, const Problem& pb, double tolerance) {
  require(tolerance >= 0.0, ErrorCode::InvalidArgument, "tolerance must be >= 0");
  require(std::find(o.recipes.begin(), o.recipes.end(), r.name) != o.recipes.end(), ErrorCode::IncompatiblePair,
          "oracle '" + o.name + "' does not apply to recipe '" + r.name + "'");
  r.check_bundle(pb);
  EquivalenceReport rep;
  if (o.name == "oracle-em") rep = detail::check_em(r, pb, cfg, s);
  else if (o.name == "hedge") rep = detail::check_hedge(pb, cfg);
  else if (o.name == "reinforce") rep = detail::check_reinforce(r, pb, cfg, s);
  else if (o.name == "direct-mle") rep = detail::check_direct_mle(r, pb, cfg, s);
  else if (o.name == "bayes-posterior") rep = detail::check_bayes(r, pb, cfg, s);
  else if (o.name == "gan-optimum") rep = detail::check_gan(r, pb, cfg, s);
  else throw Error(ErrorCode::IncompatiblePair, "no comparison for oracle '" + o.name + "'");
  rep.recipe = r.name;
  rep.oracle = o.name;
  rep.contract = o.contract;
  rep.tolerance = tolerance;
  rep.pass = rep.max_deviation <= tolerance;
  return rep;
}

inline EquivalenceReport check_equivalence(const std::string& recipe, const std::string& oracle_name,
                                           const Problem& pb, double tolerance) {
  const Recipe& r = find_recipe(recipe);
  return check_equivalence(r, r.config, r.settings, find_oracle(oracle_name), pb, tolerance);
}

}  // namespace sekit
