// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <array>

#include "sekit/experience.hpp"
#include "test_support.hpp"

using namespace sekit;

namespace {

Dist tilt(const Vec& f) { return normalize_log(f); }

Dataset aab() { return Dataset(3, {2, 1, 0}); }

}  // namespace

TEST(Dataset, EmpiricalAndErrors) {
  const Dataset d = Dataset::from_observations(3, std::vector<std::size_t>{0, 0, 1});
  EXPECT_EQ(d.total(), 3u);
  EXPECT_NEAR(d.empirical()[0], 2.0 / 3.0, 1e-15);
  EXPECT_SEKIT_ERROR(Dataset(2, {0, 0}), ErrorCode::EmptyDataset);
  EXPECT_SEKIT_ERROR(Dataset::from_observations(2, std::vector<std::size_t>{}), ErrorCode::EmptyDataset);
  EXPECT_SEKIT_ERROR(Dataset(2, {1}), ErrorCode::ShapeMismatch);
}

TEST(FData, CountRatios) {
  const Vec f = f_data(aab()).evaluate();
  EXPECT_NEAR(f[0], std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(f[1], std::log(1.0 / 3.0), 1e-15);
  EXPECT_EQ(f[2], kNegInf);
}

TEST(FData, SingleObservationIsPointMass) {
  const Dist q = tilt(f_data(Dataset(4, {0, 0, 5, 0})).evaluate());
  EXPECT_EQ(q[2], 1.0);
}

TEST(FData, UniformCountsGiveConstant) {
  const Vec f = f_data(Dataset(5, {2, 2, 2, 2, 2})).evaluate();
  for (double v : f) EXPECT_NEAR(v, -std::log(5.0), 1e-15);
}

TEST(FData, TiltEqualsEmpirical) {
  Xoshiro256 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> counts(10);
    for (auto& c : counts) c = rng.below(4);
    counts[rng.below(10)] += 1;
    const Dataset d(10, counts);
    EXPECT_LT(tv_distance(tilt(f_data(d).evaluate()), d.empirical()), 1e-15);
  }
}

TEST(FDataSelf, IdentitySplitReducesToFData) {
  const Dataset d = aab();
  const auto split = [](std::size_t t, Xoshiro256&) { return std::pair<std::size_t, std::size_t>{t, 0}; };
  const Vec a = f_data_self(d, split, 3, 1).evaluate();
  const Vec b = f_data(d).evaluate();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(FDataSelf, TwoTokenSequencesMatchHandCounts) {
  // Corpus over the 9 two-token strings on {0,1,2}: "01", "01", "20".
  const Dataset d(9, {0, 2, 0, 0, 0, 0, 1, 0, 0});
  const auto split = [](std::size_t t, Xoshiro256&) { return std::pair<std::size_t, std::size_t>{t / 3, t % 3}; };
  const Vec f = f_data_self(d, split, 3, 3).evaluate();
  EXPECT_NEAR(f[0 * 3 + 1], std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(f[2 * 3 + 0], std::log(1.0 / 3.0), 1e-15);
  EXPECT_EQ(f[1 * 3 + 1], kNegInf);
}

TEST(FDataSelf, SeededStochasticSplitIsDeterministic) {
  const Dataset d(4, {3, 1, 2, 5});
  const auto split = [](std::size_t t, Xoshiro256& rng) { return std::pair<std::size_t, std::size_t>{t, rng.below(3)}; };
  const Vec a = f_data_self(d, split, 4, 3, 99).evaluate();
  const Vec b = f_data_self(d, split, 4, 3, 99).evaluate();
  EXPECT_EQ(a, b);
}

TEST(FDataSelf, OutOfRangeSplit) {
  const auto split = [](std::size_t t, Xoshiro256&) { return std::pair<std::size_t, std::size_t>{t, 5}; };
  EXPECT_SEKIT_ERROR(f_data_self(aab(), split, 3, 2), ErrorCode::SplitOutOfRange);
}

TEST(FDataWeighted, Examples) {
  const Dataset d = aab();
  EXPECT_EQ(f_data_weighted(d, Vec{1.0, 1.0, 1.0}).evaluate(), f_data(d).evaluate());

  const Dataset ab(3, {1, 1, 0});
  const Dist q = tilt(f_data_weighted(ab, Vec{2.0, 0.0, 5.0}).evaluate());
  EXPECT_EQ(q[0], 1.0);

  const Vec f1 = f_data_weighted(d, Vec{0.5, 3.0, 1.0}).evaluate();
  const Vec f2 = f_data_weighted(d, Vec{1.0, 6.0, 2.0}).evaluate();
  EXPECT_NEAR(f2[0] - f1[0], std::log(2.0), 1e-15);
  EXPECT_NEAR(f2[1] - f1[1], std::log(2.0), 1e-15);
  EXPECT_LT(tv_distance(tilt(f1), tilt(f2)), 1e-15);

  EXPECT_SEKIT_ERROR(f_data_weighted(d, Vec{0.0, 0.0, 4.0}), ErrorCode::AllZeroWeights);
}

TEST(FDataAugmented, IndicatorKernelIsFData) {
  const Dataset d = aab();
  Vec kernel(9, 0.0);
  for (std::size_t i = 0; i < 3; ++i) kernel[i * 3 + i] = 1.0;
  const Vec a = f_data_augmented(d, kernel).evaluate();
  const Vec b = f_data(d).evaluate();
  for (std::size_t i = 0; i < 3; ++i) {
    if (b[i] == kNegInf)
      EXPECT_EQ(a[i], kNegInf);
    else
      EXPECT_NEAR(a[i], b[i], 1e-15);
  }
}

TEST(FDataAugmented, HammingPayoffOnTwoBitStrings) {
  // Strings 00, 01, 10, 11; single datum 00; R = -Hamming distance.
  const Dataset d(4, {1, 0, 0, 0});
  const auto hamming = [](std::size_t a, std::size_t b) { return double(__builtin_popcountll(a ^ b)); };
  Vec kernel(16);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t t = 0; t < 4; ++t) kernel[s * 4 + t] = std::exp(-hamming(s, t));
  const Dist q = tilt(f_data_augmented(d, kernel).evaluate());
  const double z = 1.0 + 2.0 * std::exp(-1.0) + std::exp(-2.0);
  EXPECT_NEAR(q[0], 1.0 / z, 1e-15);
  EXPECT_NEAR(q[1], std::exp(-1.0) / z, 1e-15);
  EXPECT_NEAR(q[2], std::exp(-1.0) / z, 1e-15);
  EXPECT_NEAR(q[3], std::exp(-2.0) / z, 1e-15);
}

TEST(FDataAugmented, UniformKernelIsConstant) {
  const Vec f = f_data_augmented(aab(), Vec(9, 0.25)).evaluate();
  for (double v : f) EXPECT_NEAR(v, f[0], 1e-15);
}

TEST(FDataAugmented, DegenerateKernel) {
  Vec kernel(9, 1.0);
  kernel[0] = kernel[1] = kernel[2] = 0.0;
  EXPECT_SEKIT_ERROR(f_data_augmented(aab(), kernel), ErrorCode::DegenerateKernel);
  kernel[0] = -1.0;
  EXPECT_SEKIT_ERROR(f_data_augmented(aab(), kernel), ErrorCode::DegenerateKernel);
}

TEST(PayoffKernel, RowsAreNormalizedExponentiatedPayoffs) {
  const Vec k = payoff_kernel(3, [](std::size_t t, std::size_t s) { return t == s ? 0.0 : -1.0; }, 0.5);
  for (std::size_t s = 0; s < 3; ++s) {
    const double z = 1.0 + 2.0 * std::exp(-2.0);
    EXPECT_NEAR(k[s * 3 + s], 1.0 / z, 1e-15);
  }
}

TEST(FActive, VanishingLambdaIsSupervised) {
  const Dataset pool(3, {2, 1, 1});
  const LabelOracle oracle = [](std::size_t x, Xoshiro256&) { return x % 2; };
  const Vec u{0.3, 0.9, 0.1};
  const Vec f = f_active(pool, oracle, u, 2, {1e-12, false, 0}).evaluate();
  // Supervised data on pairs (x, oracle(x)).
  std::vector<std::size_t> counts(6, 0);
  for (std::size_t x = 0; x < 3; ++x) counts[x * 2 + x % 2] = pool.count(x);
  const Vec g = f_data(Dataset(6, counts)).evaluate();
  for (std::size_t i = 0; i < 6; ++i) {
    if (g[i] == kNegInf)
      EXPECT_EQ(f[i], kNegInf);
    else
      EXPECT_NEAR(f[i], g[i], 1e-11);
  }
}

TEST(FActive, SelectionOdds) {
  const Dataset pool(2, {1, 1});
  const Dist sel = active_selection(pool, Vec{0.0, 1.0}, 1.0);
  EXPECT_NEAR(sel[1] / sel[0], std::exp(1.0), 1e-12);

  // The induced teacher marginal over x matches the selection distribution.
  const LabelOracle oracle = [](std::size_t, Xoshiro256&) { return std::size_t{0}; };
  const Dist q = tilt(f_active(pool, oracle, Vec{0.0, 1.0}, 2).evaluate());
  EXPECT_NEAR(q[2] / q[0], std::exp(1.0), 1e-12);
}

TEST(FActive, ZeroTemperatureLimit) {
  const Dataset pool(4, {1, 1, 1, 1});
  const Dist big = active_selection(pool, Vec{0.2, 0.9, 0.5, 0.1}, 1e6);
  EXPECT_EQ(big[1], 1.0);
  // Ties at the top go to the lowest index.
  const Dist tie = active_selection(pool, Vec{0.2, 0.9, 0.9, 0.1}, kInf);
  EXPECT_EQ(tie[1], 1.0);
  EXPECT_EQ(tie[2], 0.0);
}

TEST(FActive, Errors) {
  const LabelOracle oracle = [](std::size_t, Xoshiro256&) { return std::size_t{0}; };
  EXPECT_SEKIT_ERROR(f_active(Dataset(2, {1, 0}), oracle, Vec{0.0, 0.0}, 1, {0.0, false, 0}),
                     ErrorCode::InvalidArgument);
  EXPECT_SEKIT_ERROR(active_selection(Dataset(2, {1, 0}), Vec{0.0}, 1.0), ErrorCode::ShapeMismatch);
}

TEST(FActive, NormalizedInformativeness) {
  const Dataset pool(3, {1, 1, 1});
  const Dist a = active_selection(pool, Vec{2.0, 4.0, 6.0}, 1.0, true);
  EXPECT_NEAR(a[2] / a[0], std::exp(1.0), 1e-12);
  EXPECT_NEAR(a[1] / a[0], std::exp(0.5), 1e-12);
}

// ---------------------------------------------------------------------------
// Soft logic

namespace {

SoftLogicExpr atom1(const char* name, double v) { return SoftLogicExpr::atom(name, Vec{v}); }
double eval1(const SoftLogicExpr& e) { return eval_soft_logic(e, 0); }

}  // namespace

TEST(SoftLogic, WorkedValues) {
  EXPECT_NEAR(eval1(SoftLogicExpr::strong_and(atom1("A", 0.7), atom1("B", 0.6))), 0.3, 1e-15);
  EXPECT_EQ(eval1(SoftLogicExpr::lor(atom1("A", 0.7), atom1("B", 0.6))), 1.0);
  EXPECT_NEAR(eval1(SoftLogicExpr::lnot(atom1("A", 0.3))), 0.7, 1e-15);
}

TEST(SoftLogic, BooleanTruthTables) {
  for (int a = 0; a <= 1; ++a)
    for (int b = 0; b <= 1; ++b) {
      const auto A = atom1("A", a), B = atom1("B", b);
      EXPECT_EQ(eval1(SoftLogicExpr::strong_and(A, B)), double(a && b));
      EXPECT_EQ(eval1(SoftLogicExpr::lor(A, B)), double(a || b));
      EXPECT_EQ(eval1(SoftLogicExpr::implies(A, B)), double(!a || b));
      EXPECT_EQ(eval1(SoftLogicExpr::lnot(A)), double(!a));
      // The averaging conjunction agrees with Boolean AND only where both
      // inputs agree; it is the mean otherwise.
      EXPECT_EQ(eval1(SoftLogicExpr::avg({A, B})), (a + b) / 2.0);
    }
}

TEST(SoftLogic, RangeAndMonotonicity) {
  Xoshiro256 rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = rng.uniform(), b = rng.uniform(), d = 0.1 * rng.uniform();
    const double a2 = std::min(1.0, a + d);
    const auto A = atom1("A", a), A2 = atom1("A", a2), B = atom1("B", b);
    for (const auto& pair : {std::array{SoftLogicExpr::strong_and(A, B), SoftLogicExpr::strong_and(A2, B)},
                             std::array{SoftLogicExpr::lor(A, B), SoftLogicExpr::lor(A2, B)}}) {
      const double lo = eval1(pair[0]), hi = eval1(pair[1]);
      EXPECT_GE(lo, 0.0);
      EXPECT_LE(lo, 1.0);
      EXPECT_LE(lo, hi);
    }
    EXPECT_GE(eval1(SoftLogicExpr::lnot(A)), eval1(SoftLogicExpr::lnot(A2)));
    const double avg = eval1(SoftLogicExpr::avg({A, B, A2}));
    EXPECT_GE(avg, 0.0);
    EXPECT_LE(avg, 1.0);
  }
}

TEST(SoftLogic, AtomOutOfRange) {
  EXPECT_SEKIT_ERROR(eval1(atom1("A", 1.5)), ErrorCode::AtomOutOfRange);
  EXPECT_SEKIT_ERROR(eval1(SoftLogicExpr::lnot(atom1("A", -0.1))), ErrorCode::AtomOutOfRange);
}

TEST(FRule, TautologyAndContradiction) {
  const auto A = SoftLogicExpr::atom("A", Vec{0.0, 0.25, 0.6, 1.0});
  const Vec taut = f_rule(SoftLogicExpr::lor(A, SoftLogicExpr::lnot(A)), 4).evaluate();
  const Vec contra = f_rule(SoftLogicExpr::strong_and(A, SoftLogicExpr::lnot(A)), 4).evaluate();
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(taut[t], 1.0);
    EXPECT_EQ(contra[t], 0.0);
  }
}

TEST(FRule, ButRuleOnToyDomain) {
  // x in {plain, A-but-B}, y in {negative, positive}; t = x * 2 + y.
  const double yb = 0.8;
  const auto S = SoftLogicExpr::atom("but", Vec{0, 0, 1, 1});
  const auto Y = SoftLogicExpr::atom("positive", Vec{0, 1, 0, 1});
  const auto B = SoftLogicExpr::atom("y_B", Vec(4, yb));
  const auto rule = SoftLogicExpr::implies(
      S, SoftLogicExpr::strong_and(SoftLogicExpr::implies(Y, B), SoftLogicExpr::implies(B, Y)));
  const Vec f = f_rule(rule, 4).evaluate();
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 1.0);
  EXPECT_NEAR(f[3], yb, 1e-15);
  EXPECT_NEAR(f[2], 1.0 - yb, 1e-15);
}

TEST(FModelMimic, Examples) {
  const Dataset inputs(2, {1, 3});
  // Deterministic source: pseudo-labels y = 1 - x.
  const auto det = ConditionalSoftmaxModel::from_probs(2, 2, {0.0, 1.0, 1.0, 0.0});
  const Vec a = f_model_mimic(inputs, det).evaluate();
  const Vec b = f_data(Dataset(4, {0, 1, 3, 0})).evaluate();
  for (std::size_t i = 0; i < 4; ++i) {
    if (b[i] == kNegInf)
      EXPECT_EQ(a[i], kNegInf);
    else
      EXPECT_NEAR(a[i], b[i], 1e-15);
  }

  const Vec u = f_model_mimic(inputs, ConditionalSoftmaxModel::zeros(2, 3)).evaluate();
  EXPECT_NEAR(u[4], std::log(0.75) - std::log(3.0), 1e-15);

  Xoshiro256 rng(3);
  const auto src = ConditionalSoftmaxModel::random(2, 3, rng);
  const Dist q = tilt(f_model_mimic(inputs, src).evaluate());
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 3; ++y) EXPECT_NEAR(q[x * 3 + y], inputs.empirical()[x] * src.prob(x, y), 1e-15);

  EXPECT_SEKIT_ERROR(f_model_mimic(Dataset(3, {1, 1, 1}), src), ErrorCode::DomainMismatch);
}

TEST(FModelScore, Examples) {
  const Vec u = f_model_score(ConditionalSoftmaxModel::zeros(2, 4)).evaluate();
  for (double v : u) EXPECT_NEAR(v, -std::log(4.0), 1e-15);

  const auto zero = ConditionalSoftmaxModel::from_probs(1, 2, {1.0, 0.0});
  EXPECT_EQ(f_model_score(zero).evaluate()[1], kNegInf);

  // Scoring by the model itself squares the likelihood in the alpha = beta = 1 teacher.
  Xoshiro256 rng(4);
  const auto m = ConditionalSoftmaxModel::random(1, 5, rng);
  const Vec f = f_model_score(m).evaluate();
  Vec scores(5), sq(5);
  for (std::size_t y = 0; y < 5; ++y) {
    scores[y] = m.row(0).log(y) + f[y];
    sq[y] = m.prob(0, y) * m.prob(0, y);
  }
  EXPECT_LT(tv_distance(tilt(scores), Dist::from_weights(sq)), 1e-15);
}

TEST(Combine, Examples) {
  const ExperienceFn fd = f_data(aab());
  EXPECT_EQ(combine({{1.0, fd}}).evaluate(), fd.evaluate());

  // Data plus rule on a 4-point domain.
  const Dataset d(4, {1, 2, 3, 0});
  const auto R = SoftLogicExpr::atom("R", Vec{0.1, 0.9, 0.5, 1.0});
  const Dist q = tilt(combine({{1.0, f_data(d)}, {1.0, f_rule(R, 4)}}).evaluate());
  Vec w{1 * std::exp(0.1), 2 * std::exp(0.9), 3 * std::exp(0.5), 0.0};
  EXPECT_LT(tv_distance(q, Dist::from_weights(w)), 1e-15);

  const Vec base = f_data(d).evaluate();
  const Vec shifted = combine({{1.0, f_data(d)}, {2.0, ExperienceFn::constant(4, 0.7)}}).evaluate();
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(shifted[t] - base[t], 1.4, 1e-14);
  EXPECT_EQ(shifted[3], kNegInf);
}

TEST(Combine, NegInfinityAbsorbsAndErrors) {
  const ExperienceFn big = ExperienceFn::from_values({1e300, 1e300});
  const ExperienceFn veto = ExperienceFn::from_values({0.0, kNegInf});
  EXPECT_EQ(combine({{1.0, big}, {1.0, veto}}).evaluate()[1], kNegInf);
  EXPECT_SEKIT_ERROR(combine({}), ErrorCode::EmptyCombination);
  EXPECT_SEKIT_ERROR(combine({{1.0, big}, {1.0, ExperienceFn::constant(3, 0.0)}}), ErrorCode::DomainMismatch);
}

TEST(Combine, LinearOverConcatenation) {
  Xoshiro256 rng(5);
  const auto f1 = ExperienceFn::from_values(testkit::random_vector(5, rng));
  const auto f2 = ExperienceFn::from_values(testkit::random_vector(5, rng));
  const auto f3 = ExperienceFn::from_values(testkit::random_vector(5, rng));
  const Vec flat = combine({{0.5, f1}, {2.0, f2}, {1.5, f3}}).evaluate();
  const Vec nested = combine({{1.0, combine({{0.5, f1}, {2.0, f2}})}, {1.0, combine({{1.5, f3}})}}).evaluate();
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(flat[t], nested[t], 1e-14);
}

TEST(Combine, ThetaDependenceIsPropagated) {
  const ExperienceFn dep(2, [](std::span<const double> theta) { return Vec{theta[0], -theta[0]}; }, true,
                         [](const Dist& q, std::span<const double>) { return Vec{q[0] - q[1]}; });
  const auto c = combine({{2.0, dep}, {1.0, ExperienceFn::constant(2, 1.0)}});
  EXPECT_TRUE(c.theta_dependent());
  const Vec th{0.5};
  EXPECT_EQ(c.evaluate(th), (Vec{2.0, 0.0}));
  EXPECT_NEAR(c.expectation_grad(Dist::from_probs({0.75, 0.25}), th)[0], 1.0, 1e-15);
}

TEST(ExperienceFn, RejectsPositiveInfinity) {
  const ExperienceFn bad = ExperienceFn::from_values({0.0, kInf});
  EXPECT_SEKIT_ERROR(bad.evaluate(), ErrorCode::InvalidArgument);
  EXPECT_SEKIT_ERROR(ExperienceFn::constant(2, 0.0).expectation_grad(Dist::uniform(2), {}), ErrorCode::ModeUnsupported);
}
