#include <gtest/gtest.h>

#include "scmlab/metrics.hpp"

using namespace scmlab;

namespace {

struct TableRow {
  double without_sharing;
  double with_sharing;
  double gain;
};

// Reference amplification pairs and their information gains.
const TableRow kReference[] = {
    {6.08, 4.80, 21.05},   {74.38, 19.12, 74.29}, {2389.26, 37.12, 98.45}, {54216.12, 377.52, 99.30},
    {0.93, 0.78, 16.13},   {4.79, 0.78, 83.72},   {13.80, 4.53, 67.17},    {109.06, 6.34, 94.19},
    {1.46, 2.38, -63.01},  {6.13, 9.27, -51.22},  {20.37, 19.94, 2.11},    {246.15, 112.47, 54.31},
};

}  // namespace

TEST(Variance, KnownSeries) {
  EXPECT_EQ(variance(std::vector<Units>{4, 4, 4, 4}), 0.0);
  EXPECT_EQ(variance(std::vector<Units>{0, 8}), 16.0);
  EXPECT_DOUBLE_EQ(variance(std::vector<Units>{2, 4, 6}), 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(variance(std::vector<double>{1.5}), 0.0);
  EXPECT_THROW(variance(std::vector<Units>{}), MetricError);
}

TEST(Amplification, IdentityAndScaling) {
  const std::vector<Units> demand{1, 5, 2, 8, 3};
  std::vector<Units> doubled;
  for (Units d : demand) doubled.push_back(2 * d);
  const auto r = amplification({demand, doubled}, demand);
  EXPECT_DOUBLE_EQ(r.amplification[0], 1.0);
  EXPECT_DOUBLE_EQ(r.amplification[1], 4.0);
}

TEST(Amplification, ShiftInvariant) {
  const std::vector<Units> demand{1, 5, 2, 8, 3};
  std::vector<Units> shifted;
  for (Units d : demand) shifted.push_back(d + 40);
  EXPECT_DOUBLE_EQ(amplification({shifted}, demand).amplification[0], 1.0);
}

TEST(Amplification, ConstantDemandIsUndefined) {
  const std::vector<Units> demand{4, 4, 4};
  EXPECT_THROW(amplification({{1, 2, 3}}, demand), MetricError);
}

TEST(Amplification, WarmupAndOverride) {
  const std::vector<Units> demand{50, 0, 2, 4};
  const std::vector<Units> orders{90, 0, 4, 8};
  AmplificationOptions opt;
  opt.warmup = 1;
  const auto r = amplification({orders}, demand, opt);
  EXPECT_DOUBLE_EQ(r.demand_variance, variance(std::vector<Units>{0, 2, 4}));
  EXPECT_DOUBLE_EQ(r.amplification[0], 4.0);

  opt.demand_variance_override = 2.0;
  EXPECT_DOUBLE_EQ(amplification({orders}, demand, opt).amplification[0], variance(std::vector<Units>{0, 4, 8}) / 2.0);

  opt.warmup = 4;
  EXPECT_THROW(amplification({orders}, demand, opt), MetricError);
}

TEST(InformationGain, ReferenceTable) {
  for (const auto& row : kReference)
    EXPECT_NEAR(information_gain(row.without_sharing, row.with_sharing), row.gain, 0.01)
        << row.without_sharing << " -> " << row.with_sharing;
}

TEST(InformationGain, Edges) {
  EXPECT_EQ(information_gain(3.5, 3.5), 0.0);
  EXPECT_EQ(information_gain(2.0, 0.0), 100.0);
  EXPECT_THROW(information_gain(0.0, 1.0), MetricError);
}

TEST(Convergence, NashFixedDuopoly) {
  MarketScenario s;
  s.model = CournotMarket{100, 1, {0, 0}};
  s.rounds = 10;
  auto state = init(s);
  const std::vector<Units> q{33, 33};
  for (int r = 0; r < 10; ++r) play_round(state, q);
  const auto rep = convergence(state, equilibrium(s), 5);
  EXPECT_NEAR(rep.trailing_action_deviation[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(rep.trailing_action_deviation[1], 1.0 / 3.0, 1e-12);
  ASSERT_TRUE(rep.trailing_price_deviation);
  EXPECT_NEAR(*rep.trailing_price_deviation, 2.0 / 3.0, 1e-12);  // 34 against 33.33
  EXPECT_EQ(rep.action_deviation.size(), 10u);
}

TEST(Convergence, TrailingWindowOnly) {
  MarketScenario s;
  s.model = BertrandHomogeneousMarket{100, 1, {20, 40}, 1};
  s.rounds = 4;
  auto state = init(s);
  for (const std::vector<Units> p : {std::vector<Units>{90, 90}, {60, 60}, {40, 40}, {40, 40}}) play_round(state, p);
  const auto rep = convergence(state, equilibrium(s), 2);
  EXPECT_EQ(rep.trailing_action_deviation, (std::vector<double>{0.0, 0.0}));
  EXPECT_FALSE(rep.trailing_price_deviation.has_value());
  EXPECT_EQ(rep.action_deviation[0][0], 50.0);
  EXPECT_THROW(convergence(state, equilibrium(s), 5), MetricError);
  EXPECT_THROW(convergence(state, equilibrium(s), 0), MetricError);
}

TEST(Spread, MeanAndStddev) {
  const auto s = spread({2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_DOUBLE_EQ(s.stddev, 2.0);
  EXPECT_EQ(s.count, 8u);
  EXPECT_EQ(spread({}).count, 0u);
}
