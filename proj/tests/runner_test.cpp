#include <gtest/gtest.h>

#include "scmlab/runner.hpp"
#include "test_support.hpp"

using namespace scmlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("scmlab_runner_" + name);
  fs::remove_all(p);
  return p;
}

ScenarioFile nash_duopoly() {
  return parse_scenario(json::parse(R"({
    "name": "nash_duo", "seed": 1, "rounds": 10,
    "game": {"type": "cournot", "a": 100, "b": 1, "costs": [0, 0]},
    "agents": [
      {"id": "firm_1", "type": "scripted", "policy": {"type": "nash_fixed"}},
      {"id": "firm_2", "type": "scripted", "policy": {"type": "nash_fixed"}}
    ]})"));
}

ScenarioFile scripted_risk_chain() {
  auto doc = json::parse(fixtures::read_text(fixtures::scenario_path("beer_risk_info_sweep.json")));
  doc.erase("sweep");
  doc.erase("mock");
  for (auto& a : doc["agents"]) {
    a.erase("model_id");
    a.erase("temperature");
    a.erase("max_retries");
    a.erase("risk");
    a["type"] = "scripted";
    a["policy"] = {{"type", "base_stock"}};
  }
  return parse_scenario(doc);
}

RunConfig config(ScenarioFile f, const fs::path& out, bool mock = false) {
  RunConfig c;
  c.scenario = std::move(f);
  c.out_dir = out;
  c.mock = mock;
  return c;
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = fixtures::read_text(e.path());
  return out;
}

}  // namespace

TEST(Planning, SeedsAndSweepCells) {
  RunConfig c = config(load_scenario(fixtures::scenario_path("beer_risk_info_sweep.json")), "x");
  c.repetitions = 2;
  const auto plans = plan_episodes(c);
  ASSERT_EQ(plans.size(), 12u);
  EXPECT_EQ(plans[0].id, "averse-isolated-rep0");
  // all cells of one repetition share a seed, so demand paths are common
  const auto base = std::get<BeerScenario>(c.scenario.game).seed;
  for (const auto& p : plans) EXPECT_EQ(p.seed, base + p.repetition);

  c.seeds = {5};
  EXPECT_THROW(plan_episodes(c), ConfigError);
  c.seeds = {5, 9};
  EXPECT_EQ(plan_episodes(c)[1].seed, 9u);
  c.repetitions = 0;
  EXPECT_THROW(plan_episodes(c), ConfigError);
}

TEST(Run, NashFixedDuopolySettlesNearEquilibrium) {
  const auto dir = scratch("nash");
  const auto summary = run(config(nash_duopoly(), dir));
  ASSERT_EQ(summary.episodes.size(), 1u);
  const auto& rec = summary.episodes[0];
  EXPECT_TRUE(summary.all_clean());
  ASSERT_EQ(rec.actions.size(), 10u);
  for (const auto& a : rec.actions) EXPECT_EQ(a, (std::vector<Units>{33, 33}));
  EXPECT_NEAR(rec.outcomes.back()["price"].get<double>(), 100.0 / 3.0, 1.0);
  EXPECT_NEAR(rec.metrics["trailing_action_deviation"][0].get<double>(), 1.0 / 3.0, 1e-9);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "convergence.csv"));
  EXPECT_FALSE(fs::exists(dir / "transcripts"));
  fs::remove_all(dir);
}

TEST(Run, ScriptedBeerIsBitReproducible) {
  const auto a = scratch("bs_a"), b = scratch("bs_b");
  const auto file = load_scenario(fixtures::scenario_path("decision_constant_base_stock.json"));
  run(config(file, a));
  run(config(file, b));
  EXPECT_EQ(tree(a), tree(b));
  const auto rec = load_run(a).episodes.at(0);
  EXPECT_EQ(rec.actions.size(), 12u);
  EXPECT_FALSE(rec.flagged);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, MockSweepIsReproducibleAndExercisesRecovery) {
  const auto a = scratch("mock_a"), b = scratch("mock_b");
  const auto file = load_scenario(fixtures::scenario_path("beer_risk_info_sweep.json"));
  auto ca = config(file, a, true);
  auto cb = config(file, b, true);
  cb.parallelism = 3;  // scheduling must not leak into the output
  const auto summary = run(ca);
  run(cb);
  EXPECT_EQ(tree(a), tree(b));
  ASSERT_EQ(summary.episodes.size(), 6u);

  std::size_t fallbacks = 0, retried = 0;
  for (const auto& r : summary.episodes) {
    EXPECT_FALSE(r.flagged) << r.abort_reason;
    EXPECT_EQ(r.actions.size(), 24u);
    fallbacks += r.fallback_count();
  }
  for (const auto& [path, text] : tree(a)) {
    if (path.find("transcripts") != 0) continue;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) retried += json::parse(line)["retry_count"].get<int>() > 0;
  }
  EXPECT_GT(retried, 0u);
  EXPECT_GT(fallbacks, 0u);

  // sweep cells share the demand path of their repetition
  const auto d0 = detail::beer_demand(summary.episodes[0]);
  for (const auto& r : summary.episodes) EXPECT_EQ(detail::beer_demand(r), d0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, ManifestAloneReproducesTheRun) {
  const auto a = scratch("manifest_a"), b = scratch("manifest_b");
  auto c = config(load_scenario(fixtures::scenario_path("cournot_duopoly.json")), a, true);
  c.repetitions = 2;
  c.base_seed = 40;
  run(c);
  const auto again = config_from_manifest(a, b);
  EXPECT_EQ(again.seeds, (std::vector<std::uint64_t>{40, 41}));
  run(again);
  auto ta = tree(a), tb = tree(b);
  EXPECT_EQ(ta, tb);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, EndpointFailureFlagsEpisodeWithoutAborting) {
  const auto dir = scratch("down");
  auto c = config(load_scenario(fixtures::scenario_path("cournot_duopoly.json")), dir);
  c.scenario.client.auth_env.clear();
  c.transport = MockTransport::sequence({status_reply(503)});
  c.sleeper = [](double) {};
  const auto summary = run(c);
  ASSERT_EQ(summary.episodes.size(), 1u);
  EXPECT_TRUE(summary.episodes[0].flagged);
  EXPECT_FALSE(summary.all_clean());
  EXPECT_NE(summary.episodes[0].abort_reason.find("503"), std::string::npos);
  EXPECT_TRUE(load_run(dir).episodes[0].flagged);
  fs::remove_all(dir);
}

TEST(Run, MissingCredentialFlagsEpisode) {
  const auto dir = scratch("nokey");
  auto c = config(load_scenario(fixtures::scenario_path("cournot_duopoly.json")), dir);
  c.scenario.client.auth_env = "SCMLAB_TEST_UNSET_VARIABLE";
  c.transport = MockTransport::canned("[1]");
  const auto summary = run(c);
  EXPECT_TRUE(summary.episodes.at(0).flagged);
  EXPECT_NE(summary.episodes[0].abort_reason.find("SCMLAB_TEST_UNSET_VARIABLE"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Replay, RecordedEpisodesReplayExactly) {
  const auto dir = scratch("replay");
  auto c = config(load_scenario(fixtures::scenario_path("bertrand_heterogeneity.json")), dir, true);
  run(c);
  auto rec = load_run(dir).episodes.at(0);
  EXPECT_TRUE(replay(rec).matches);

  const auto beer = run(config(scripted_risk_chain(), dir)).episodes.at(0);
  EXPECT_TRUE(replay(beer).matches);

  auto tampered = beer;
  tampered.actions[3][1] += 5;
  const auto report = replay(tampered);
  EXPECT_FALSE(report.matches);
  EXPECT_EQ(report.mismatches.front().rfind("round index 3", 0), 0u);
  fs::remove_all(dir);
}

TEST(Replay, CompareRewardsListsEveryDifference) {
  const auto dir = scratch("compare");
  const auto rec = run(config(scripted_risk_chain(), dir)).episodes.at(0);
  EXPECT_TRUE(compare_rewards(rec, 6, rec.rewards[6]).empty());

  // Reference rewards recorded elsewhere for the same period.
  const std::vector<double> reference{0, -48, -200, -320};
  const auto diffs = compare_rewards(rec, 6, reference);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 4; ++i) expected += rec.rewards[6][i] != reference[i];
  EXPECT_EQ(diffs.size(), expected);
  EXPECT_GT(diffs.size(), 0u);
  EXPECT_EQ(compare_rewards(rec, 99, reference), std::vector<std::string>{"period 99 was not played"});
  EXPECT_EQ(compare_rewards(rec, 6, {1.0}), std::vector<std::string>{"reward count differs"});
  fs::remove_all(dir);
}

TEST(Records, JsonRoundTrip) {
  const auto dir = scratch("roundtrip");
  const auto rec = run(config(nash_duopoly(), dir)).episodes.at(0);
  EXPECT_EQ(to_json(record_from_json(to_json(rec))), to_json(rec));
  auto broken = to_json(rec);
  broken.erase("rounds");
  EXPECT_THROW(record_from_json(broken), RunError);
  fs::remove_all(dir);
}

TEST(Metrics, TableFromMockSweep) {
  const auto dir = scratch("table");
  const auto summary = run(config(load_scenario(fixtures::scenario_path("beer_risk_info_sweep.json")), dir, true));
  const auto rows = metrics_table(summary.episodes);
  ASSERT_EQ(rows.size(), 24u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.episodes, 1u);
    ASSERT_EQ(row.amplification.count, 1u);
    // independent recomputation from the stored series
    const auto& rec = *std::find_if(summary.episodes.begin(), summary.episodes.end(), [&](const EpisodeRecord& r) {
      return r.risk == row.risk && r.info_mode == row.info_mode;
    });
    const auto orders = detail::orders_by_agent(rec)[row.stage];
    const auto demand = detail::beer_demand(rec);
    EXPECT_DOUBLE_EQ(row.amplification.mean, variance(orders) / variance(demand));
    ASSERT_TRUE(row.information_gain.has_value());
  }
  const auto csv = fixtures::read_text(dir / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "risk,info_mode,stage,role,episodes,order_variance,order_variance_sd,demand_variance,amplification,"
            "amplification_sd,information_gain");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 25);
  fs::remove_all(dir);
}

TEST(PlotData, MarketAndBeerFiles) {
  const auto dir = scratch("plot");
  run(config(nash_duopoly(), dir));
  const auto files = emit_plot_data(dir);
  ASSERT_EQ(files.size(), 1u);
  const auto csv = fixtures::read_text(files[0]);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "round,q_firm1,q_firm2,q_star,price,price_star");
  EXPECT_NE(csv.find("\n1,33,33,33.333333,34.000000,33.333333\n"), std::string::npos);

  const auto beer = scratch("plot_beer");
  run(config(scripted_risk_chain(), beer));
  const auto beer_files = emit_plot_data(beer);
  ASSERT_EQ(beer_files.size(), 2u);
  const auto orders = fixtures::read_text(beer_files[0]);
  EXPECT_EQ(orders.substr(0, orders.find('\n')), "period,retailer,wholesaler,distributor,manufacturer,demand");
  EXPECT_EQ(beer_files[1].filename(), "amplification.csv");
  EXPECT_THROW(emit_plot_data(scratch("empty")), RunError);
  fs::remove_all(dir);
  fs::remove_all(beer);
}
