// SPDX-License-Identifier: Apache-2.0
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>

#include "mdp_fixtures.hpp"
#include "sekit/io.hpp"
#include "sekit/oracles.hpp"
#include "test_support.hpp"

using namespace sekit;
using testkit::central_difference;
using testkit::max_abs_diff;
using testkit::max_rel_error;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects named measurements; any failed requirement fails the criterion.
class Report {
 public:
  void need(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failures_ += (failures_.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    notes_ += (notes_.empty() ? "" : " ") + key + "=" + buf;
  }
  Outcome done() const { return {pass_, pass_ ? notes_ : failures_ + " | " + notes_}; }

 private:
  bool pass_ = true;
  std::string failures_, notes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dataset random_dataset(std::size_t n, std::size_t draws, Xoshiro256& rng) {
  std::vector<std::size_t> obs;
  for (std::size_t i = 0; i < draws; ++i) obs.push_back(rng.below(n));
  return Dataset::from_observations(n, obs);
}

// Independent W1 on the line: sum_j |F_a(j) - F_b(j)| (x_{j+1} - x_j).
double w1_cdf(const Vec& a, const Vec& b, const Vec& x) {
  double fa = 0.0, fb = 0.0, acc = 0.0;
  for (std::size_t j = 0; j + 1 < a.size(); ++j) {
    fa += a[j];
    fb += b[j];
    acc += std::abs(fa - fb) * (x[j + 1] - x[j]);
  }
  return acc;
}

// ---------------------------------------------------------------------------

Outcome supervised_mle() {
  Report r;
  Xoshiro256 rng(101);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t n : {2u, 7u, 16u, 64u}) {
    Problem pb;
    pb.data = random_dataset(n, 3 * n + 5, rng);
    const RecipeOutcome out = run_recipe(find_recipe("supervised-mle"), pb);
    const Vec ref = oracle::direct_mle([&] {
      Vec c;
      for (std::size_t t = 0; t < n; ++t) c.push_back(static_cast<double>(pb.data->count(t)));
      return c;
    }());
    worst = std::max(worst, tv_distance(joint(out.model).probs(), ref));
  }
  const double secs = seconds_since(t0);
  r.note("max_tv", worst);
  r.note("seconds", secs);
  r.need(worst <= 1e-6, "TV above 1e-6");
  r.need(secs < 1.0, "slower than 1 s");
  return r.done();
}

Outcome em_equivalence() {
  Report r;
  Xoshiro256 rng(102);
  Problem pb;
  pb.data = random_dataset(5, 50, rng);
  pb.latent = 2;
  const Recipe& recipe = find_recipe("unsupervised-mle");
  SEConfig cfg = recipe.config;
  cfg.seed = 102;
  cfg.stopping.max_iters = 20;
  cfg.stopping.tol = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = check_equivalence(recipe, cfg, recipe.settings, find_oracle("oracle-em"), pb, 1e-10);
  const double secs = seconds_since(t0);
  r.note("max_dev", rep.max_deviation);
  r.note("nll_increase", rep.details.at("max_nll_increase"));
  r.note("seconds", secs);
  r.need(rep.pass, "deviation above 1e-10");
  r.need(rep.compared == 20, "did not compare 20 iterations");
  r.need(rep.details.at("max_nll_increase") <= 0.0, "NLL increased");
  r.need(secs < 1.0, "slower than 1 s");
  return r.done();
}

Outcome policy_gradient() {
  Report r;
  Xoshiro256 rng(103);
  Problem pb;
  pb.mdp = testkit::random_mdp(4, 2, 0.9, rng);
  pb.init = testkit::random_vector(8, rng);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = check_equivalence("policy-gradient", "reinforce", pb, 1e-8);
  const double secs = seconds_since(t0);
  const double cosine = rep.details.at("cosine"), ratio_z = rep.details.at("ratio_times_z");
  r.note("1-cos", 1.0 - cosine);
  r.note("|ratio*Z-1|", std::abs(ratio_z - 1.0));
  r.note("seconds", secs);
  r.need(cosine >= 1.0 - 1e-8, "cosine below 1-1e-8");
  r.need(std::abs(ratio_z - 1.0) <= 1e-8, "scale ratio differs from 1/Z");
  r.need(secs < 1.0, "slower than 1 s");
  return r.done();
}

Outcome rl_as_inference() {
  Report r;
  Xoshiro256 rng(104);
  Problem pb;
  pb.mdp = testkit::random_mdp(4, 2, 0.9, rng);
  pb.init = testkit::random_vector(8, rng);
  const Recipe& recipe = find_recipe("rl-as-inference");
  double worst = 0.0;
  for (double rho : {0.1, 1.0, 10.0}) {
    SEConfig cfg = recipe.config;
    cfg.alpha = cfg.beta = rho;
    cfg.stopping.max_iters = 5;
    const auto rep = check_equivalence(recipe, cfg, recipe.settings, find_oracle("bayes-posterior"), pb, 1e-12);
    worst = std::max(worst, rep.max_deviation);
    r.need(rep.pass, "rho=" + std::to_string(rho) + " above 1e-12");
  }
  r.note("max_dev", worst);
  return r.done();
}

Outcome multiplicative_weights() {
  Report r;
  const std::size_t k = 8, T = 1000;
  const double alpha = std::sqrt(T / (2.0 * std::log(double(k))));
  const double bound = std::sqrt(T * std::log(double(k)) / 2.0) + 1.0;
  Xoshiro256 rng(105);
  // Adaptive adversary: zero reward for the heaviest expert, uniform noise elsewhere.
  std::vector<Vec> adaptive;
  Dist w = Dist::uniform(k);
  for (std::size_t t = 0; t < T; ++t) {
    Vec f = testkit::random_vector(k, rng, 0.5, 1.0);
    std::size_t heavy = 0;
    for (std::size_t i = 1; i < k; ++i)
      if (w[i] > w[heavy]) heavy = i;
    f[heavy] = 0.0;
    w = mw_update(w, f, alpha);
    adaptive.push_back(f);
  }
  std::vector<Vec> noise(T);
  for (auto& f : noise) f = testkit::random_vector(k, rng, 0.0, 1.0);

  const Recipe& recipe = find_recipe("multiplicative-weights");
  SEConfig cfg = recipe.config;
  cfg.alpha = cfg.beta = alpha;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_dev = 0.0, worst_regret = -kInf;
  for (const auto* rewards : {&adaptive, &noise}) {
    Problem pb;
    pb.rewards = *rewards;
    const auto rep = check_equivalence(recipe, cfg, recipe.settings, find_oracle("hedge"), pb, 1e-12);
    worst_dev = std::max(worst_dev, rep.max_deviation);
    worst_regret = std::max(worst_regret, rep.details.at("regret"));
    r.need(rep.pass, "trajectory differs from Hedge");
    r.need(rep.compared == T + 1, "trajectory length");
  }
  const double secs = seconds_since(t0);
  r.note("max_dev", worst_dev);
  r.note("regret", worst_regret);
  r.note("bound", bound);
  r.note("seconds", secs);
  r.need(worst_regret <= bound, "regret above bound");
  r.need(secs < 1.0, "slower than 1 s");
  return r.done();
}

Outcome gan_optimum() {
  Report r;
  Xoshiro256 rng(106);
  Problem pb;
  pb.p_data = testkit::random_interior(10, rng);
  const auto t0 = std::chrono::steady_clock::now();
  const RecipeOutcome out = run_recipe(find_recipe("vanilla-gan"), pb);
  const double tv = tv_distance(joint(out.model), *pb.p_data);
  const Dist p = joint(out.model);
  const DiscriminatorUpdate u = discriminator_update(*out.disc, p, *pb.p_data, 5000, 10.0);
  const double disc_dev =
      max_abs_diff(u.disc.probabilities(), oracle::gan_optimal_discriminator(pb.p_data->probs(), p.probs()));
  const double secs = seconds_since(t0);
  r.note("tv", tv);
  r.note("iterations", static_cast<double>(out.trace.records.size()));
  r.note("sigma_dev", disc_dev);
  r.note("seconds", secs);
  r.need(tv <= 1e-3, "TV above 1e-3");
  r.need(out.trace.records.size() <= 5000, "more than 5000 iterations");
  r.need(disc_dev <= 1e-4, "classifier differs from p_data/(p_data+p_theta)");
  r.need(secs < 30.0, "slower than 30 s");
  return r.done();
}

Outcome reweighted_identity() {
  Report r;
  Xoshiro256 rng(107);
  const Discriminator kinds[] = {Discriminator::classifier(8), Discriminator::critic(8),
                                 Discriminator::lipschitz_critic(8)};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Discriminator& kind = kinds[trial % 3];
    Discriminator frozen = kind, now = kind;
    for (double& v : frozen.phi) v = 3.0 * (2.0 * rng.uniform() - 1.0);
    for (double& v : now.phi) v = 3.0 * (2.0 * rng.uniform() - 1.0);
    frozen = project_lipschitz(frozen);
    now = project_lipschitz(now);
    const Dist pt = testkit::random_interior(8, rng), pd = testkit::random_interior(8, rng);
    // Explicit teacher q ∝ p_theta exp{phi_frozen}.
    Vec q(8);
    double z = 0.0;
    const Vec f = frozen.values();
    for (std::size_t i = 0; i < 8; ++i) z += q[i] = pt[i] * std::exp(f[i]);
    for (double& v : q) v /= z;
    worst = std::max(worst, max_abs_diff(reweighted_gradient(now, f, pt, pd),
                                         discriminator_gradient(now, Dist::from_probs(q), pd)));
  }
  r.note("max_dev", worst);
  r.need(worst <= 1e-10, "gradients differ above 1e-10");
  return r.done();
}

Outcome wgan_w1() {
  Report r;
  Xoshiro256 rng(108);
  Problem pb;
  pb.p_data = testkit::random_interior(10, rng);
  const RecipeOutcome out = run_recipe(find_recipe("wgan"), pb);
  const auto& last = out.trace.records.back();
  Vec x(10);
  for (std::size_t i = 0; i < 10; ++i) x[i] = static_cast<double>(i);  // default ground coordinates
  const double w1_exact = last.extras.at("divergence_at_disc");
  const double critic = last.extras.at("disc_objective");
  const double rel = std::abs(critic - w1_exact) / w1_exact;
  r.note("critic", critic);
  r.note("w1", w1_exact);
  r.note("rel_gap", rel);
  r.need(rel <= 0.1, "critic objective more than 10% from W1");

  double sym = 0.0, tri = -kInf, formula = 0.0;
  const auto w = DivergenceFn::w1();
  for (int trial = 0; trial < 200; ++trial) {
    const Dist a = testkit::random_interior(10, rng, 0.0), b = testkit::random_interior(10, rng, 0.0),
               c = testkit::random_interior(10, rng, 0.0);
    const double ab = divergence(w, a, b), ba = divergence(w, b, a), ac = divergence(w, a, c), bc = divergence(w, b, c);
    sym = std::max(sym, std::abs(ab - ba));
    tri = std::max(tri, ac - ab - bc);
    formula = std::max(formula, std::abs(ab - w1_cdf(a.probs(), b.probs(), x)));
  }
  r.note("asym", sym);
  r.note("triangle_excess", tri);
  r.note("cdf_dev", formula);
  r.need(sym <= 1e-9, "asymmetric");
  r.need(tri <= 1e-9, "triangle inequality violated");
  r.need(formula <= 1e-9, "W1 differs from the CDF formula");
  return r.done();
}

Outcome soft_logic() {
  Report r;
  auto atom = [](const char* n, double v) { return SoftLogicExpr::atom(n, Vec{v}); };
  for (int a = 0; a <= 1; ++a)
    for (int b = 0; b <= 1; ++b) {
      const auto A = atom("A", a), B = atom("B", b);
      r.need(eval_soft_logic(SoftLogicExpr::strong_and(A, B), 0) == double(a && b), "AND table");
      r.need(eval_soft_logic(SoftLogicExpr::lor(A, B), 0) == double(a || b), "OR table");
      r.need(eval_soft_logic(SoftLogicExpr::implies(A, B), 0) == double(!a || b), "IMPLIES table");
      r.need(eval_soft_logic(SoftLogicExpr::lnot(A), 0) == double(!a), "NOT table");
    }
  const double conj = eval_soft_logic(SoftLogicExpr::strong_and(atom("A", 0.7), atom("B", 0.6)), 0);
  const double disj = eval_soft_logic(SoftLogicExpr::lor(atom("A", 0.7), atom("B", 0.6)), 0);
  // 0.7 + 0.6 - 1 evaluated in binary64 is one rounding step from the literal 0.3.
  r.note("and-0.3", conj - 0.3);
  r.need(std::abs(conj - 0.3) <= 4 * std::numeric_limits<double>::epsilon() * 0.3, "A&B(0.7,0.6) != 0.3");
  r.need(disj == 1.0, "A|B(0.7,0.6) != 1");
  return r.done();
}

Outcome raml_teacher() {
  Report r;
  Xoshiro256 rng(110);
  const std::size_t n = 8, draws = 30;
  Problem pb;
  pb.data = random_dataset(n, draws, rng);
  const Vec reward = testkit::random_vector(n * n, rng, -3.0, 0.0);
  for (double v : reward) pb.kernel.push_back(std::exp(v));
  // Exponentiated payoff: q(t) ∝ sum_{t*} p~(t*) exp{R(t, t*)}.
  Vec expected(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t)
      expected[t] += static_cast<double>(pb.data->count(s)) / double(draws) * std::exp(reward[s * n + t]);
  double z = 0.0;
  for (double v : expected) z += v;
  for (double& v : expected) v /= z;
  const RecipeOutcome out = run_recipe(find_recipe("data-augmentation"), pb);
  const double dev = max_abs_diff(out.trace.records.front().q, expected);
  r.note("max_dev", dev);
  r.need(dev <= 1e-12, "teacher differs above 1e-12");
  return r.done();
}

Outcome pfd() {
  Report r;
  Xoshiro256 rng(111);
  double kl_dev = 0.0, js_dev = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Dist pd = testkit::random_interior(10, rng), q = testkit::random_interior(10, rng);
    Vec kl(10), js(10);
    for (std::size_t i = 0; i < 10; ++i) {
      kl[i] = std::log(q[i] / pd[i]) + 1.0;
      js[i] = 0.5 * std::log(2.0 * q[i] / (q[i] + pd[i]));
    }
    kl_dev = std::max(kl_dev, max_abs_diff(influence_function(DivergenceFn::kl(), pd, q).psi, mean_centered(kl)));
    js_dev = std::max(js_dev, max_abs_diff(influence_function(DivergenceFn::js(), pd, q).psi, mean_centered(js)));
  }
  const Dist pd = testkit::random_interior(10, rng);
  Dist q = Dist::uniform(10);
  int steps = 0;
  while (tv_distance(q, pd) > 1e-6 && steps < 500) {
    q = pfd_step(q, influence_function(DivergenceFn::kl(), pd, q), 0.5);
    ++steps;
  }
  r.note("kl_dev", kl_dev);
  r.note("js_dev", js_dev);
  r.note("steps", steps);
  r.note("tv", tv_distance(q, pd));
  r.need(kl_dev <= 1e-4, "KL influence function off");
  r.need(js_dev <= 1e-4, "JS influence function off");
  r.need(tv_distance(q, pd) <= 1e-6, "PFD did not reach TV 1e-6 in 500 steps");
  return r.done();
}

Outcome gradient_hygiene() {
  Report r;
  Xoshiro256 rng(112);
  double ent = 0.0, div = 0.0, mod = 0.0, disc = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Dist q = testkit::random_interior(7, rng), p = testkit::random_interior(7, rng);
    for (const auto& h : {UncertaintyFn::shannon(), UncertaintyFn::tsallis(2.0), UncertaintyFn::tsallis(0.5)}) {
      const Vec fd = central_difference([&](std::span<const double> v) { return entropy(v, h); }, q.probs());
      ent = std::max(ent, max_rel_error(entropy_grad(q, h), fd));
    }
    for (const auto& d : {DivergenceFn::cross_entropy(), DivergenceFn::kl(), DivergenceFn::js(), DivergenceFn::w1()}) {
      const Vec fd = central_difference([&](std::span<const double> v) { return divergence(d, v, p.span()); },
                                        q.probs());
      div = std::max(div, max_rel_error(divergence_grad_q(d, q, p), fd));
    }
    const Dist q12 = testkit::random_interior(12, rng);
    const Model models[] = {SoftmaxModel::random(12, rng),
                            JointConditionalModel{ConditionalSoftmaxModel::random(3, 4, rng), testkit::random_interior(3, rng)},
                            MixtureModel::random(2, 6, rng)};
    for (const auto& m : models) {
      const Vec fd = central_difference(
          [&](std::span<const double> theta) {
            return expected_log_prob(with_params(m, Vec(theta.begin(), theta.end())), q12);
          },
          params(m));
      mod = std::max(mod, max_rel_error(grad_expected_log_prob(m, q12), fd));
    }
    for (Discriminator d : {Discriminator::classifier(7), Discriminator::critic(7), Discriminator::lipschitz_critic(7, 0.8)}) {
      for (double& v : d.phi) v = 2.0 * (2.0 * rng.uniform() - 1.0);
      d = project_lipschitz(d);
      const Vec fd = central_difference(
          [&](std::span<const double> v) {
            return discriminator_objective(disc_with_params(d, Vec(v.begin(), v.end())), q, p);
          },
          disc_params(d));
      disc = std::max(disc, max_rel_error(discriminator_gradient(d, q, p), fd));
    }
  }
  r.note("entropy", ent);
  r.note("divergence", div);
  r.note("model", mod);
  r.note("discriminator", disc);
  r.need(ent <= 1e-5, "entropy gradient");
  r.need(div <= 1e-5, "divergence gradient");
  r.need(mod <= 1e-5, "model gradient");
  r.need(disc <= 1e-5, "discriminator gradient");
  return r.done();
}

Outcome determinism() {
  Report r;
  Xoshiro256 rng(113);
  Problem mixture, gan, mdp, experts;
  mixture.data = random_dataset(5, 50, rng);
  gan.p_data = testkit::random_interior(10, rng);
  mdp.mdp = testkit::random_mdp(4, 2, 0.9, rng);
  mdp.init = testkit::random_vector(8, rng);
  for (int t = 0; t < 50; ++t) experts.rewards.push_back(testkit::random_vector(4, rng, 0.0, 1.0));
  const std::pair<const char*, const Problem*> runs[] = {
      {"unsupervised-mle", &mixture}, {"vanilla-gan", &gan}, {"policy-gradient", &mdp}, {"multiplicative-weights", &experts}};
  for (const auto& [name, pb] : runs) {
    const Recipe& recipe = find_recipe(name);
    for (std::uint64_t seed : {1u, 2024u}) {
      SEConfig cfg = recipe.config;
      cfg.seed = seed;
      const RecipeOutcome a = run_recipe(recipe, *pb, cfg, recipe.settings);
      const RecipeOutcome b = run_recipe(recipe, *pb, cfg, recipe.settings);
      r.need(io::trace_csv(a.trace) == io::trace_csv(b.trace), std::string(name) + " trace.csv differs");
      r.need(io::to_json(a.trace).dump() == io::to_json(b.trace).dump(), std::string(name) + " trace.json differs");
      r.need(io::to_json(a.model).dump() == io::to_json(b.model).dump(), std::string(name) + " model differs");
    }
  }
  r.note("runs", 2.0 * std::size(runs));
  return r.done();
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"supervised MLE reduces to the empirical distribution", supervised_mle},
      {"EM equivalence and monotone NLL", em_equivalence},
      {"policy gradient parallel with scale 1/Z", policy_gradient},
      {"RL-as-inference teacher", rl_as_inference},
      {"multiplicative weights equals Hedge, regret bound", multiplicative_weights},
      {"vanilla GAN optimum", gan_optimum},
      {"reweighted discriminator identity", reweighted_identity},
      {"WGAN critic and W1 metric", wgan_w1},
      {"soft logic truth tables", soft_logic},
      {"RAML exponentiated-payoff teacher", raml_teacher},
      {"PFD influence functions and convergence", pfd},
      {"analytic gradients match finite differences", gradient_hygiene},
      {"determinism", determinism},
  };
  int failed = 0, index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2d %s (%s)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
  }
  std::printf("%d/%d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
