#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "quasitest/stats.hpp"

using namespace quasitest;

namespace {

Sample xy(std::vector<double> x, std::vector<double> y) { return Sample::from_xy(x, y); }

/// A truncated sample with x < y, from independent normals by rejection.
Sample truncated_normal_sample(std::size_t n, std::mt19937_64& g) {
  std::normal_distribution<double> z;
  std::vector<double> x, y;
  while (x.size() < n) {
    const double a = z(g), b = z(g);
    if (a < b) {
      x.push_back(a);
      y.push_back(b);
    }
  }
  return xy(x, y);
}

std::vector<std::vector<double>> rows_of(const WeightMatrix& w) {
  std::vector<std::vector<double>> r(w.size(), std::vector<double>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w.size(); ++j) r[i][j] = w(i, j);
  return r;
}

}  // namespace

TEST(QuadrantObserved, Examples) {
  const auto s = xy({1, 3, 1}, {1, 3, 3});
  const auto o = quadrant_observed(s, {2, 2});
  EXPECT_EQ(o[0], 1.0);
  EXPECT_EQ(o[3], 1.0);
  EXPECT_EQ(o[1], 1.0);
  EXPECT_EQ(o[2], 0.0);
  const auto far = quadrant_observed(s, {10, 10});
  EXPECT_EQ(far[0], 3.0);
}

TEST(CenterPerturbation, DeterministicAndSmall) {
  const auto a = CenterPerturbation::make(50, 7);
  const auto b = CenterPerturbation::make(50, 7);
  EXPECT_EQ(a.dx, b.dx);
  EXPECT_EQ(a.dy, b.dy);
  double ss = 0.0;
  for (double v : a.dx) ss += v * v;
  EXPECT_LT(std::sqrt(ss / 50.0), 1e-3);
  EXPECT_NE(CenterPerturbation::make(50, 8).dx, a.dx);
}

TEST(PairProbExpectation, UniformTwoByTwo) {
  const std::vector<double> xs{1, 2}, ys{1, 2};
  const PairProbExpectation e(xs, ys, exact_pair_probs(WeightMatrix(2, std::vector<double>(4, 1.0))));
  for (double v : e(1.5, 1.5)) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(PairProbExpectation, IdentityGivesObservedCounts) {
  std::mt19937_64 g(1);
  const auto s = truncated_normal_sample(12, g);
  const auto xs = s.xs(), ys = s.ys();
  const PairProbExpectation e(xs, ys, PairAssignmentProbs::identity(12));
  for (std::size_t c = 0; c < 12; ++c) {
    const auto got = e(xs[c] + 1e-6, ys[c] - 1e-6);
    const auto ref = quadrant_observed(xs, ys, xs[c] + 1e-6, ys[c] - 1e-6);
    for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(got[k], ref[k]);
  }
}

TEST(PairProbExpectation, MatchesEnumeratedLaw) {
  std::mt19937_64 g(2);
  for (int rep = 0; rep < 5; ++rep) {
    const auto s = truncated_normal_sample(6, g);
    const auto w = build_weight_matrix(s, BiasFunction(bias::Truncation{}));
    const auto xs = s.xs(), ys = s.ys();
    const PairProbExpectation e(xs, ys, exact_pair_probs(w));
    for (std::size_t c = 0; c < 6; ++c) {
      const double cx = xs[c] + 1e-7, cy = ys[(c + 1) % 6] - 1e-7;
      const auto ref = oracle::claim3_expectation(rows_of(w), xs, ys, cx, cy);
      const auto got = e(cx, cy);
      const auto direct = expected_from_pair_probs(exact_pair_probs(w), s, {cx, cy});
      for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(got[k], ref[k], 1e-12);
        EXPECT_NEAR(direct[k], ref[k], 1e-12);
      }
    }
  }
}

TEST(MarginalExpectation, ConstantWeightFactorizes) {
  const auto s = xy({1, 2, 3, 4}, {2, 1, 4, 3});
  const auto fx = DiscreteCDF::empirical(s.xs()), fy = DiscreteCDF::empirical(s.ys());
  const auto grid = detail::marginal_expectation(fx, fy, BiasFunction(), 4);
  const auto e = grid(2.5, 1.5);
  EXPECT_DOUBLE_EQ(e[0], 4.0 * fx(2.5) * fy(1.5));
  const auto d = expected_from_marginals(fx, fy, BiasFunction(), s, {2.5, 1.5});
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(d[k], e[k], 1e-12);
}

TEST(MarginalExpectation, SumBiasDoubleSum) {
  const DiscreteCDF fx({1, 2, 3}, {0.2, 0.3, 0.5});
  const DiscreteCDF fy({1, 4, 5}, {0.5, 0.25, 0.25});
  const BiasFunction w(bias::SumXY{});
  const auto s = xy({1, 2, 3}, {1, 4, 5});
  // Hand enumeration of w * mx * my over the nine support pairs.
  double z = 0.0, low = 0.0;
  for (double a : {1.0, 2.0, 3.0})
    for (double b : {1.0, 4.0, 5.0}) {
      const double m = (a + b) * (a == 1 ? 0.2 : a == 2 ? 0.3 : 0.5) * (b == 1 ? 0.5 : 0.25);
      z += m;
      if (a <= 2.5 && b <= 4.5) low += m;
    }
  const auto e = detail::marginal_expectation(fx, fy, w, 3)(2.5, 4.5);
  EXPECT_NEAR(e[0], 3.0 * low / z, 1e-13);
  const auto d = expected_from_marginals(fx, fy, w, s, {2.5, 4.5});
  EXPECT_NEAR(d[0], 3.0 * low / z, 1e-13);
}

TEST(MarginalExpectation, DegenerateTruncationMeasure) {
  const DiscreteCDF fx({0}, {1.0}), fy({1}, {1.0});
  const auto e = detail::marginal_expectation(fx, fy, BiasFunction(bias::Truncation{}), 5)(0.5, 0.5);
  EXPECT_DOUBLE_EQ(e[1], 5.0);
  EXPECT_EQ(e[0] + e[2] + e[3], 0.0);
  const DiscreteCDF bad({2}, {1.0});
  EXPECT_THROW(detail::marginal_expectation(bad, fy, BiasFunction(bias::Truncation{}), 5), Error);
}

TEST(PearsonTerm, Examples) {
  bool inc = false;
  EXPECT_DOUBLE_EQ(pearson_term({2, 0, 0, 2}, {1, 1, 1, 1}, 2.0, inc), 4.0);
  EXPECT_TRUE(inc);
  EXPECT_DOUBLE_EQ(pearson_term({2, 0, 0, 2}, {1.5, 1.5, 1.5, 1.5}, 1.0, inc), 5.0 / 1.5);
  EXPECT_EQ(pearson_term({3, 3, 3, 3}, {3, 3, 3, 3}, 1.0, inc), 0.0);
  EXPECT_TRUE(inc);
  EXPECT_EQ(pearson_term({2, 0, 0, 2}, {1, 1, 1, 1}, 1.0, inc), 0.0);
  EXPECT_FALSE(inc);
}

TEST(QuadrantCounter, MatchesBruteForce) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0, 1);
  QuadrantCounter counter;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 1 + g() % 40;
    std::vector<double> px(n), py(n), pw(n), cx(n), cy(n);
    for (std::size_t l = 0; l < n; ++l) {
      px[l] = std::floor(u(g) * 10);  // ties on purpose
      py[l] = std::floor(u(g) * 10);
      pw[l] = u(g);
      cx[l] = std::floor(u(g) * 10);
      cy[l] = std::floor(u(g) * 10);
    }
    const auto& s = counter.compute(px, py, pw, cx, cy);
    for (std::size_t c = 0; c < n; ++c) {
      double lb = 0, lx = 0, ly = 0;
      for (std::size_t l = 0; l < n; ++l) {
        lb += (px[l] <= cx[c] && py[l] <= cy[c]) ? pw[l] : 0.0;
        lx += px[l] <= cx[c] ? pw[l] : 0.0;
        ly += py[l] <= cy[c] ? pw[l] : 0.0;
      }
      EXPECT_NEAR(s.low_both[c], lb, 1e-12);
      EXPECT_NEAR(s.low_x[c], lx, 1e-12);
      EXPECT_NEAR(s.low_y[c], ly, 1e-12);
    }
  }
}

TEST(AdjustedHoeffding, MatchesDirectOracle) {
  std::mt19937_64 g(4);
  const auto s = truncated_normal_sample(20, g);
  const auto w = build_weight_matrix(s, BiasFunction(bias::Truncation{}));
  McmcConfig mc;
  mc.draws = 2000;
  mc.seed = 1;
  const auto probs = *sample_permutations_mcmc(w, mc).visited_pair_probs;
  const auto v = adjusted_hoeffding(s, provider::PermutationProbs{probs}, 11);

  const auto centers = perturb_centers(s, 11);
  std::vector<double> cx, cy;
  for (const auto& [a, b] : centers) {
    cx.push_back(a);
    cy.push_back(b);
  }
  std::vector<std::vector<double>> p(20, std::vector<double>(20));
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) p[i][j] = probs(i, j);
  const auto xs = s.xs(), ys = s.ys();
  std::size_t used = 0;
  const double ref = oracle::hoeffding_direct(
      xs, ys, cx, cy, [&](double a, double b) { return oracle::pair_prob_expectation(p, xs, ys, a, b); }, &used);
  EXPECT_NEAR(v.value, ref, 1e-10);
  EXPECT_EQ(v.centers_used, used);
  EXPECT_GT(used, 0u);
}

TEST(AdjustedHoeffding, DeterministicAndDetailed) {
  std::mt19937_64 g(5);
  const auto s = truncated_normal_sample(30, g);
  std::vector<QuadrantCounts> d;
  const auto a = adjusted_hoeffding(s, provider::NaiveEmpirical{}, 3, &d);
  const auto b = adjusted_hoeffding(s, provider::NaiveEmpirical{}, 3);
  EXPECT_EQ(a.value, b.value);
  ASSERT_EQ(d.size(), 30u);
  double sum = 0.0;
  for (const auto& q : d) {
    if (!q.included) continue;
    for (int k = 0; k < 4; ++k) sum += (q.observed[k] - q.expected[k]) * (q.observed[k] - q.expected[k]) / q.expected[k];
  }
  EXPECT_NEAR(sum, a.value, 1e-10);
}

TEST(AdjustedHoeffding, NoValidCenters) {
  const auto s = xy({0, 1}, {1, 2});
  try {
    adjusted_hoeffding(s, provider::NaiveEmpirical{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoValidCenters);
  }
}

TEST(InverseWeight, UnitWeightsMatchCountStatistic) {
  std::mt19937_64 g(6);
  std::normal_distribution<double> z;
  // n prime: no expected count n F G can equal the filter threshold 1 exactly.
  std::vector<double> x(41), y(41);
  for (std::size_t i = 0; i < 41; ++i) x[i] = z(g), y[i] = z(g);
  const auto s = xy(x, y);
  const auto iw = inverse_weight_statistic(s, BiasFunction(), 2);
  const auto naive = adjusted_hoeffding(s, provider::NaiveEmpirical{}, 2);
  EXPECT_NEAR(iw.value, naive.value, 1e-9);
  EXPECT_EQ(iw.centers_used, naive.centers_used);
}

TEST(InverseWeight, TwoPointSums) {
  // w-values 2 and 4: total inverse weight 3/4.
  QuadrantCounter counter;
  const std::vector<double> px{1, 3}, py{1, 1}, inv{0.5, 0.25}, cx{2}, cy{5};
  const auto& s = counter.compute(px, py, inv, cx, cy);
  EXPECT_DOUBLE_EQ(s.total, 0.75);
  EXPECT_DOUBLE_EQ(s.low_x[0], 0.5);
  EXPECT_DOUBLE_EQ(s.low_y[0], 0.75);
}

TEST(InverseWeight, ZeroWeightAtPoint) {
  const auto s = xy({1, 2}, {0, 3});
  try {
    inverse_weight_statistic(s, BiasFunction(bias::Truncation{}), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroWeightAtPoint);
  }
}

TEST(StatisticKind, Labels) {
  EXPECT_EQ(to_string(StatisticKind::AdjustedHoeffding), "adjusted-hoeffding");
  EXPECT_EQ(to_string(StatisticKind::InverseWeighting), "inverse-weighting");
}
