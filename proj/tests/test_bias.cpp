#include <gtest/gtest.h>

#include <sstream>

#include "quasitest/bias.hpp"

using namespace quasitest;

TEST(Bias, FamilyExamples) {
  const BiasFunction t(bias::Truncation{});
  EXPECT_EQ(t(1, 2), 1.0);
  EXPECT_EQ(t(2, 1), 0.0);
  EXPECT_EQ(t(2, 2), 0.0);
  EXPECT_EQ(BiasFunction(bias::SumXY{})(1, 2), 3.0);
  EXPECT_EQ(BiasFunction()(5, -3), 1.0);
  const BiasFunction unit(bias::CensoringComposite{StepSurvival::unit()});
  EXPECT_EQ(unit(1, 2), 1.0);
  EXPECT_EQ(unit(2, 1), 0.0);
}

TEST(Bias, GaussianDensityProduct) {
  const BiasFunction g(bias::GaussianDensityProduct{0.5});
  EXPECT_NEAR(g(0, 0), 1.0, 1e-15);
  const double q = (1.0 - 2.0 * 0.5 * 1.0 * 2.0 + 4.0) / (2.0 * 0.75);
  EXPECT_NEAR(g(1, 2), std::exp(-q), 1e-15);
  EXPECT_THROW(BiasFunction(bias::GaussianDensityProduct{1.0}), Error);
}

TEST(Bias, StripAndHuji) {
  const BiasFunction s(bias::StripIndicator{0.3});
  EXPECT_EQ(s(0.0, 0.2), 1.0);
  EXPECT_EQ(s(0.0, 0.4), 0.0);
  const BiasFunction h(bias::HujiStyle{18.0, 65.0});
  EXPECT_EQ(h(20.0, 40.0), 5.0);
  EXPECT_EQ(h(10.0, 10.0), 18.0);
  EXPECT_EQ(h(40.0, 30.0), 0.0);
  EXPECT_EQ(h.upper_bound(), 18.0);
}

TEST(Bias, NegativeSumThrows) {
  try {
    BiasFunction(bias::SumXY{})(-3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeWeight);
  }
}

TEST(Bias, Metadata) {
  EXPECT_TRUE(BiasFunction(bias::SumXY{}).strictly_positive());
  EXPECT_FALSE(BiasFunction(bias::Truncation{}).strictly_positive());
  EXPECT_EQ(BiasFunction(bias::Truncation{}).upper_bound(), 1.0);
  EXPECT_TRUE(std::isinf(BiasFunction(bias::SumXY{}).upper_bound()));
  EXPECT_TRUE(BiasFunction(bias::SumXY{}).linear_coefficients().has_value());
  EXPECT_FALSE(BiasFunction(bias::Truncation{}).linear_coefficients().has_value());
  EXPECT_EQ(BiasFunction(bias::Truncation{}).name(), "truncation");
}

TEST(KaplanMeier, HandCase) {
  const std::vector<double> d{2, 3, 5};
  const std::vector<int> e{1, 0, 1};
  const auto s = kaplan_meier(d, e);
  EXPECT_EQ(s(0.0), 1.0);
  EXPECT_EQ(s(1.0), 1.0);
  EXPECT_EQ(s(1.999), 1.0);
  EXPECT_DOUBLE_EQ(s(2.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s(4.0), 2.0 / 3.0);
  EXPECT_EQ(s(5.0), 0.0);
  EXPECT_EQ(s(100.0), 0.0);
}

TEST(KaplanMeier, NoEventsAndSingleSubject) {
  const std::vector<double> d{1, 2, 3};
  const std::vector<int> none{0, 0, 0};
  const auto s = kaplan_meier(d, none);
  for (double t : {0.0, 1.0, 2.5, 10.0}) EXPECT_EQ(s(t), 1.0);

  const std::vector<double> one{4};
  const std::vector<int> ev{1};
  const auto s1 = kaplan_meier(one, ev);
  EXPECT_EQ(s1(3.99), 1.0);
  EXPECT_EQ(s1(4.0), 0.0);
}

TEST(KaplanMeier, TiesCountEventsBeforeCensoring) {
  const std::vector<double> d{2, 2, 3};
  const std::vector<int> e{1, 0, 1};
  const auto s = kaplan_meier(d, e);
  EXPECT_DOUBLE_EQ(s(2.0), 2.0 / 3.0);
  EXPECT_EQ(s(3.0), 0.0);
}

TEST(KaplanMeier, RejectsBadInput) {
  const std::vector<double> d{1, -1};
  const std::vector<int> e{1, 1};
  EXPECT_THROW(kaplan_meier(d, e), Error);
  const std::vector<int> bad{1, 2};
  const std::vector<double> ok{1, 2};
  EXPECT_THROW(kaplan_meier(ok, bad), Error);
}

TEST(CensoringWeight, FullyUncensoredReducesToTruncation) {
  const Sample s({{0, 1, 1}, {1, 3, 1}, {2, 2.5, 1}}, true);
  const auto adj = censoring_weight(s);
  EXPECT_EQ(adj.uncensored.size(), 3u);
  EXPECT_FALSE(adj.uncensored.censored());
  const BiasFunction t(bias::Truncation{});
  for (const auto& a : s.observations()) {
    for (const auto& b : s.observations()) EXPECT_EQ(adj.bias(a.x, b.y), t(a.x, b.y));
  }
}

TEST(CensoringWeight, SubsampleSizeAndErrors) {
  const Sample s({{0, 1, 1}, {1, 3, 0}, {2, 2.5, 1}, {0, 4, 0}}, true);
  EXPECT_EQ(censoring_weight(s).uncensored.size(), 2u);
  const Sample few({{0, 1, 1}, {1, 3, 0}, {2, 2.5, 0}}, true);
  try {
    censoring_weight(few);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewUncensored);
  }
  const Sample bad({{0, 1, 1}, {3, 1, 1}}, true);
  EXPECT_THROW(censoring_weight(bad), Error);
}

TEST(CensoringWeight, CompositeUsesSurvivalOfGap) {
  // Gaps 1 (event), 2 (censored), 3 (event): S(gap) = 1 on [0,2), 1/2 from 2 on (censoring at 2 of 2 at risk).
  const Sample s({{0, 1, 1}, {0, 2, 0}, {0, 3, 1}}, true);
  const auto adj = censoring_weight(s);
  EXPECT_EQ(adj.bias(0.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(adj.bias(0.0, 2.5), 0.5);
  EXPECT_EQ(adj.bias(1.0, 0.5), 0.0);
}

TEST(TabulatedGrid, LoadAndLookup) {
  std::istringstream in("x,y,w\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n");
  const auto g = load_tabulated_grid(in);
  EXPECT_EQ(g(0.1, 0.9), 2.0);
  EXPECT_EQ(g(0.9, 0.1), 3.0);
  EXPECT_EQ(g.upper_bound(), 4.0);
  std::istringstream ragged("x,y,w\n0,0,1\n0,1,2\n1,0,3\n");
  EXPECT_THROW(load_tabulated_grid(ragged), Error);
  std::istringstream neg("x,y,w\n0,0,-1\n");
  EXPECT_THROW(load_tabulated_grid(neg), Error);
}
