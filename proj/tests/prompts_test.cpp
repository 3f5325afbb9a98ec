#include <gtest/gtest.h>

#include "scmlab/prompts.hpp"
#include "test_support.hpp"

using namespace scmlab;
using fixtures::golden;

namespace {

MarketScenario triopoly() {
  MarketScenario s;
  s.model = CournotMarket{100, 1, {15, 20, 25}};
  return s;
}

MarketScenario cost_asymmetry() {
  MarketScenario s;
  s.model = BertrandHomogeneousMarket{100, 1, {20, 40}, 1};
  return s;
}

// Stage observations as printed at round 7 of the risk-experiment transcript.
Observation round7(std::size_t stage) {
  Observation o;
  o.stage_index = stage;
  o.num_stages = 4;
  o.period = 6;
  o.horizon = 24;
  o.capacity = 20;
  switch (stage) {
    case 0:
      o.lead_time = 2, o.on_hand = 8, o.backlog = 0, o.upstream_backlog = 36;
      o.recent_sales = {4, 6, 2};
      o.arriving_deliveries = {12, 0};
      o.demand_history = std::vector<Units>{6, 3, 7, 4, 6, 2};
      o.demand_range_hint = std::pair<Units, Units>{0, 8};
      o.reward_history = {0, 0, 0, 0, 0, 0};
      break;
    case 1:
      o.lead_time = 2, o.on_hand = 0, o.backlog = 36, o.upstream_backlog = 160;
      o.recent_sales = {0, 12, 0};
      o.arriving_deliveries = {0, 0};
      o.received_orders = {12, 12, 12, 12, 12, 12};
      o.received_order_now = 12;
      o.reward_history = {0, -12, -12, -24, -24, -36};
      break;
    case 2:
      o.lead_time = 2, o.on_hand = 0, o.backlog = 160, o.upstream_backlog = 228;
      o.recent_sales = {0, 0, 8};
      o.arriving_deliveries = {20, 0};
      o.received_orders = {12, 36, 36, 36, 36, 36};
      o.received_order_now = 60;
      o.reward_history = {0, -36, -60, -96, -132, -160};
      break;
    default:
      o.lead_time = 3, o.on_hand = 240, o.backlog = 228, o.upstream_backlog = 0;
      o.recent_sales = {8, 20, 20};
      o.arriving_deliveries = {0, 0, 180};
      o.received_orders = {12, 108, 72, 0, 32, 64};
      o.received_order_now = 112;
      o.reward_history = {0, -108, -180, -172, -184, -228};
  }
  return o;
}

const char* kRoles[] = {"retailer", "wholesaler", "distributor", "manufacturer"};

}  // namespace

TEST(RenderTemplate, SubstitutesAndRejectsUnknown) {
  EXPECT_EQ(render_template("a {{x}} b {{y}}", {{"x", "1"}, {"y", "2"}}), "a 1 b 2");
  EXPECT_THROW(render_template("{{missing}}", {}), PromptError);
  EXPECT_THROW(render_template("{{empty}}", {{"empty", ""}}), PromptError);
  EXPECT_THROW(render_template("{{open", {}), PromptError);
}

TEST(GoldenPrompts, CournotSystemAndProcess) {
  const auto s = triopoly();
  const auto state = init(s);
  for (std::size_t firm = 0; firm < 3; ++firm) {
    const auto b = render_market_prompts(s, firm, 1, state);
    EXPECT_EQ(b.system_message, render_template(golden("cournot_system.txt"), b.placeholders_resolved));
    EXPECT_EQ(b.process_message, render_template(golden("cournot_process.txt"), b.placeholders_resolved));
    EXPECT_EQ(b.placeholders_resolved.at("firm_name"), "Firm_" + std::to_string(firm + 1));
    EXPECT_EQ(b.placeholders_resolved.at("num_firms"), "3");
  }
}

TEST(GoldenPrompts, CournotRoundOneState) {
  const auto s = triopoly();
  const auto state = init(s);
  EXPECT_EQ(detail::market_state_description(s, state, 0, 5), golden("cournot_state_round1_firm1.txt"));
  EXPECT_EQ(detail::market_state_description(s, state, 2, 5), golden("cournot_state_round1_firm3.txt"));
  const auto b = render_market_prompts(s, 0, 1, state);
  EXPECT_NE(b.process_message.find(golden("cournot_state_round1_firm1.txt")), std::string::npos);
}

TEST(GoldenPrompts, BertrandSystemProcessAndState) {
  const auto s = cost_asymmetry();
  const auto state = init(s);
  for (std::size_t firm = 0; firm < 2; ++firm) {
    const auto b = render_market_prompts(s, firm, 1, state);
    EXPECT_EQ(b.system_message, render_template(golden("bertrand_system.txt"), b.placeholders_resolved));
    EXPECT_EQ(b.process_message, render_template(golden("bertrand_process.txt"), b.placeholders_resolved));
  }
  EXPECT_EQ(detail::market_state_description(s, state, 0, 5), golden("bertrand_state_round1_firm1.txt"));
  EXPECT_EQ(detail::market_state_description(s, state, 1, 5), golden("bertrand_state_round1_firm2.txt"));
  EXPECT_EQ(render_market_prompts(s, 1, 1, state).placeholders_resolved.at("marginal_cost"), "$40.0$");
}

TEST(GoldenPrompts, MarketOutcomeBoxes) {
  const auto c = triopoly();
  const std::vector<Units> q{28, 20, 16};
  const std::vector<double> qd{28, 20, 16};
  const auto cc = clear_market(c, qd);
  EXPECT_EQ(render_market_outcome(c, 1, q, cc, 1084), golden("cournot_outcome_round1.txt"));

  const auto b = cost_asymmetry();
  const std::vector<Units> p{40, 70};
  const std::vector<double> pd{40, 70};
  const auto bc = clear_market(b, pd);
  EXPECT_EQ(render_market_outcome(b, 1, p, bc, 1200), golden("bertrand_outcome_round1.txt"));
}

TEST(GoldenPrompts, RiskAndSharingPreambles) {
  EXPECT_EQ(risk_preamble(RiskPreference::averse), golden("risk_averse.txt"));
  EXPECT_EQ(risk_preamble(RiskPreference::neutral), golden("risk_neutral.txt"));
  EXPECT_EQ(risk_preamble(RiskPreference::appetite), golden("risk_appetite.txt"));

  const auto sc = fixtures::risk_experiment_chain();
  const auto obs = round7(0);
  EXPECT_EQ(render_beer_prompts(sc, obs, RiskPreference::averse, InfoMode::isolated).system_message,
            golden("risk_averse.txt"));
  EXPECT_EQ(render_beer_prompts(sc, obs, RiskPreference::neutral, InfoMode::sharing).system_message,
            golden("risk_neutral.txt") + "\n\n" + golden("information_sharing.txt"));
  EXPECT_EQ(render_beer_prompts(sc, obs, std::nullopt, InfoMode::sharing).system_message,
            golden("information_sharing.txt"));
}

TEST(GoldenPrompts, BeerRoundSevenStates) {
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::string role = kRoles[stage];
    EXPECT_EQ(detail::beer_state_description(round7(stage)), golden("beer_round7_" + role + "_state.txt")) << role;
  }
}

TEST(GoldenPrompts, BeerProcessMessage) {
  const auto sc = fixtures::risk_experiment_chain();
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::string role = kRoles[stage];
    const auto b = render_beer_prompts(sc, round7(stage), RiskPreference::neutral, InfoMode::isolated);
    const std::string guidelines =
        golden(stage == 3 ? "beer_manufacturer_guidelines.txt" : "beer_downstream_guidelines.txt");
    const std::string expected = golden("beer_round7_" + role + "_header.txt") + "\n\nYour current state:\n" +
                                 golden("beer_round7_" + role + "_state.txt") + "\n\n" + guidelines;
    EXPECT_EQ(b.process_message, expected) << role;
  }
}

TEST(GoldenPrompts, BeerOutcomeBox) {
  const std::vector<Units> orders{12, 60, 112, 256};
  const std::vector<double> rewards{0, -48, -200, -320};
  EXPECT_EQ(render_beer_outcome(6, orders, rewards, -2032), golden("beer_outcome_period6.txt"));
}

TEST(BeerPrompts, SharingAddsUpstreamLine) {
  auto obs = round7(0);
  obs.upstream_info = UpstreamInfo{2, 0, 36};
  const auto text = detail::beer_state_description(obs);
  EXPECT_NE(text.find("Upstream stage 2 (wholesaler) information: Lead Time: 2 round(s), Inventory Level: 0 "
                      "unit(s), Current Backlog: 36 unit(s)"),
            std::string::npos);
}

TEST(BeerPrompts, NormalDemandHint) {
  auto obs = round7(0);
  obs.demand_range_hint.reset();
  obs.demand_normal_hint = NormalRoundedDemand{4, 2};
  EXPECT_NE(detail::beer_state_description(obs).find("averages 4.0 units per round with a standard deviation of 2.0"),
            std::string::npos);
}

TEST(BeerPrompts, MismatchedObservationRejected) {
  auto obs = round7(0);
  obs.num_stages = 3;
  EXPECT_THROW(render_beer_prompts(fixtures::risk_experiment_chain(), obs, std::nullopt, InfoMode::isolated),
               PromptError);
}

TEST(MarketPrompts, HistoryAppearsAfterFirstRound) {
  auto s = triopoly();
  auto state = init(s);
  const std::vector<Units> q{28, 20, 16};
  play_round(state, q);
  const auto text = detail::market_state_description(s, state, 0, 5);
  EXPECT_NE(text.find("Previous round: market price $36.00$, total quantity $64$, your quantity $28$, your profit $588.00$"),
            std::string::npos);
  EXPECT_NE(text.find("Your cumulative profit: $588.00$"), std::string::npos);
}

TEST(MarketPrompts, CustomFirmNamesAndBadInputs) {
  const auto s = triopoly();
  const auto state = init(s);
  MarketPromptOptions opt;
  opt.firm_names = {"Acme", "Bolt", "Crux"};
  EXPECT_EQ(render_market_prompts(s, 1, 1, state, opt).placeholders_resolved.at("firm_name"), "Bolt");
  EXPECT_THROW(render_market_prompts(s, 0, 0, state), PromptError);
  EXPECT_THROW(render_market_prompts(s, 3, 1, state), PromptError);
}
