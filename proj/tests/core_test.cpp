#include <gtest/gtest.h>

#include <set>

#include "scmlab/core.hpp"
#include "test_support.hpp"

using namespace scmlab;

TEST(Demand, ConstantReturnsLevel) {
  Rng rng = split_stream(1, Stream::demand);
  for (Units t = 0; t < 50; ++t) EXPECT_EQ(sample_demand(ConstantDemand{4}, t, rng), 4);
}

TEST(Demand, SeasonalDispatchesToPhase) {
  const SeasonalUniformDemand d{{{3, 0, 4}, {3, 4, 8}, {3, 0, 4}, {3, 4, 8}}};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = split_stream(seed, Stream::demand);
    const Units v = sample_demand(d, 4, rng);
    EXPECT_GE(v, 4);
    EXPECT_LE(v, 8);
  }
  for (Units t : {0, 1, 2, 6, 7, 8}) {
    Rng rng = split_stream(3, Stream::demand);
    const Units v = sample_demand(d, t, rng);
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 4);
  }
}

TEST(Demand, SeasonalOutsidePhasesIsConfigError) {
  const SeasonalUniformDemand d{{{3, 0, 4}, {3, 4, 8}}};
  Rng rng(1);
  EXPECT_THROW(sample_demand(d, 6, rng), ConfigError);
  EXPECT_THROW(sample_demand(d, -1, rng), ConfigError);
}

TEST(Demand, NormalDrawClampsAtZero) {
  EXPECT_EQ(clamp_normal_draw(-1.2), 0);
  EXPECT_EQ(clamp_normal_draw(2.5), 3);
  EXPECT_EQ(clamp_normal_draw(2.49), 2);
  EXPECT_EQ(clamp_normal_draw(0.4), 0);
}

TEST(Demand, NormalNeverNegative) {
  Rng rng = split_stream(5, Stream::demand);
  const NormalRoundedDemand d{1.0, 3.0};  // mass well below zero
  bool saw_zero = false;
  for (int i = 0; i < 20000; ++i) {
    const Units v = sample_demand(d, 0, rng);
    ASSERT_GE(v, 0);
    saw_zero = saw_zero || v == 0;
  }
  EXPECT_TRUE(saw_zero);
}

TEST(Demand, UniformMeanAndSupport) {
  Rng rng = split_stream(2024, Stream::demand);
  double sum = 0.0;
  std::set<Units> seen;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Units v = sample_demand(UniformIntDemand{0, 8}, i, rng);
    ASSERT_GE(v, 0);
    ASSERT_LE(v, 8);
    seen.insert(v);
    sum += static_cast<double>(v);
  }
  EXPECT_NEAR(sum / n, 4.0, 0.05);
  EXPECT_EQ(seen.size(), 9u);  // inclusive on both ends
}

TEST(Demand, SameSeedSameSequence) {
  const DemandModel models[] = {UniformIntDemand{0, 8}, NormalRoundedDemand{4, 2},
                                SeasonalUniformDemand{{{3, 0, 4}, {3, 4, 8}, {3, 0, 4}, {3, 4, 8}}}};
  for (const auto& m : models) {
    Rng a = split_stream(99, Stream::demand);
    Rng b = split_stream(99, Stream::demand);
    for (Units t = 0; t < 12; ++t) EXPECT_EQ(sample_demand(m, t, a), sample_demand(m, t, b));
  }
}

TEST(Rng, StreamsAreDistinct) {
  Rng demand = split_stream(1, Stream::demand);
  Rng tie = split_stream(1, Stream::tie_break);
  Rng other_seed = split_stream(2, Stream::demand);
  const auto d0 = demand();
  EXPECT_NE(d0, tie());
  EXPECT_NE(d0, other_seed());
}

TEST(Rounding, HalfUp) {
  EXPECT_EQ(round_half_up(24.5), 25);
  EXPECT_EQ(round_half_up(24.49), 24);
  EXPECT_EQ(round_half_up(33.333), 33);
  EXPECT_EQ(round_half_up(-0.5), 0);
}

TEST(DemandVariance, IntegerUniform) {
  EXPECT_DOUBLE_EQ(theoretical_demand_variance(UniformIntDemand{0, 8}), 80.0 / 12.0);
  EXPECT_DOUBLE_EQ(theoretical_demand_variance(ConstantDemand{4}), 0.0);
  EXPECT_DOUBLE_EQ(theoretical_demand_variance(NormalRoundedDemand{4, 2}), 4.0);
}

TEST(Validation, RiskExperimentChainIsValid) {
  const auto s = fixtures::risk_experiment_chain();
  EXPECT_TRUE(validate(s).empty());
  EXPECT_NO_THROW(require_valid(s));
}

TEST(Validation, DecisionTestChainsAreValid) {
  for (const char* name : {"constant", "variable", "larger", "seasonal", "normal"})
    EXPECT_TRUE(validate(fixtures::decision_test_chain(name)).empty()) << name;
}

TEST(Validation, CournotInterceptBelowCost) {
  MarketScenario s;
  s.model = CournotMarket{10, 1, {20}};
  const auto issues = validate(s);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].path, "a");
  EXPECT_NE(issues[0].message.find("a <= max cost"), std::string::npos);
}

TEST(Validation, SeasonalPhaseSumMismatch) {
  auto s = fixtures::decision_test_chain("seasonal");
  s.demand = SeasonalUniformDemand{{{3, 0, 4}, {3, 4, 8}, {3, 0, 4}, {2, 4, 8}}};
  const auto issues = validate(s);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].path, "demand.phases");
  EXPECT_NE(issues[0].message.find("11"), std::string::npos);
}

TEST(Validation, ReportsEveryIssueWithPaths) {
  BeerScenario s = fixtures::risk_experiment_chain();
  s.num_stages = 1;
  s.horizon = 0;
  s.lead_time = {0};
  s.holding_cost = {-1};
  s.demand = UniformIntDemand{5, 2};
  const auto issues = validate(s);
  std::set<std::string> paths;
  for (const auto& i : issues) paths.insert(i.path);
  for (const char* p : {"num_stages", "horizon", "lead_time[0]", "initial_inventory", "capacity",
                        "holding_cost[0]", "backlog_cost", "demand"})
    EXPECT_TRUE(paths.count(p)) << p;
  try {
    require_valid(s);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.issues().size(), issues.size());
  }
}

TEST(Validation, ZeroStagesRejected) {
  BeerScenario s = fixtures::risk_experiment_chain();
  s.num_stages = 0;
  s.initial_inventory.clear();
  s.lead_time.clear();
  s.capacity.clear();
  s.holding_cost.clear();
  s.backlog_cost.clear();
  EXPECT_THROW(require_valid(s), ValidationError);
}

TEST(Validation, DifferentiatedStabilityCondition) {
  MarketScenario s;
  s.model = BertrandDifferentiatedMarket{{100, 100, 100}, {1, 1, 1}, {{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}, {20, 20, 20}};
  EXPECT_FALSE(validate(s).empty());  // 2B == C(n-1)
  s.model = BertrandDifferentiatedMarket{{100, 100, 100}, {1, 1, 1}, {{0, .5, .5}, {.5, 0, .5}, {.5, .5, 0}}, {20, 20, 20}};
  EXPECT_TRUE(validate(s).empty());
}

TEST(Heterogeneity, SubstitutionMapping) {
  const auto d = substitution_from_heterogeneity({0.5, 1.5}, 0.6);
  EXPECT_DOUBLE_EQ(d[0][0], 0.0);
  EXPECT_DOUBLE_EQ(d[0][1], 0.6 / 1.5);
  EXPECT_DOUBLE_EQ(d[1][0], 0.6 / 0.5);
}
