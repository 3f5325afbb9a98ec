#pragma once

// Experiment orchestration: expands a scenario into episodes (repetitions,
// optionally crossed with a risk x information sweep), wires agents to the
// engines, and persists everything needed to replay or re-run.
//
// Run directory layout:
//   manifest.json                      scenario, seeds, hash, version
//   episodes/<id>/record.json          EpisodeRecord
//   episodes/<id>/log.jsonl            one line per round/period
//   transcripts/<id>/<agent>.jsonl     agent transcripts
//   metrics.csv                        beer runs: per (risk, info_mode, stage)
//   convergence.csv                    market runs: per (episode, firm)

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "scmlab/agents.hpp"
#include "scmlab/http_transport.hpp"
#include "scmlab/metrics.hpp"
#include "scmlab/scenario_io.hpp"

namespace scmlab {

inline constexpr std::string_view version = "0.1.0";

class RunError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Offline mock endpoint

/// Replies depend only on (seed, request body), so they do not depend on
/// call order or thread scheduling. Scripted replies are looked up by the
/// requesting agent (the "user" field), the round number in the prompt and
/// the attempt number (assistant turns already in the conversation).
inline std::shared_ptr<MockTransport> make_mock_transport(const MockSpec& spec, std::uint64_t seed) {
  return std::make_shared<MockTransport>([spec, seed](const json& request) {
    static const std::regex round_re(R"(round (\d+))");
    const std::string agent = request.value("user", std::string{});
    const auto& messages = request.at("messages");
    std::string first_user;
    std::size_t assistant_turns = 0;
    for (const auto& m : messages) {
      const auto role = m.at("role").get<std::string>();
      if (role == "user" && first_user.empty()) first_user = m.at("content").get<std::string>();
      if (role == "assistant") ++assistant_turns;
    }
    std::smatch match;
    Units round = 0;
    if (std::regex_search(first_user, match, round_re)) round = std::stoll(match[1].str());

    if (auto a = spec.replies.find(agent); a != spec.replies.end())
      if (auto r = a->second.find(round); r != a->second.end() && assistant_turns < r->second.size())
        return ok_reply(r->second[assistant_turns]);

    const std::uint64_t h = fnv1a(request.at("messages").dump(), fnv1a(agent, seed * 0x9e3779b97f4a7c15ULL + 1));
    Rng rng(h);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u < spec.garbage_rate) return ok_reply("I need more information before committing to a number.");
    const Units v = std::uniform_int_distribution<Units>(spec.lo, spec.hi)(rng);
    return ok_reply("Mock decision for round " + std::to_string(round) + ". [" + std::to_string(v) + "]");
  });
}

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  ScenarioFile scenario;
  std::filesystem::path scenario_path;  // informational
  std::size_t repetitions = 1;
  std::vector<std::uint64_t> seeds;     // explicit list; otherwise base_seed + k
  std::optional<std::uint64_t> base_seed;
  std::filesystem::path out_dir = "runs/latest";
  bool mock = false;
  std::size_t parallelism = 1;
  // Test hooks: replace the endpoint and the backoff sleeper.
  std::shared_ptr<Transport> transport;
  ChatClient::Sleeper sleeper;
};

struct EpisodePlan {
  std::string id;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::optional<RiskPreference> risk;
  std::optional<InfoMode> info_mode;
};

inline std::vector<std::uint64_t> resolve_seeds(const RunConfig& c) {
  if (c.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (!c.seeds.empty()) {
    if (c.seeds.size() != c.repetitions)
      throw ConfigError("explicit seed list must have one seed per repetition");
    return c.seeds;
  }
  const std::uint64_t base =
      c.base_seed.value_or(std::visit([](const auto& s) { return s.seed; }, c.scenario.game));
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < c.repetitions; ++k) out.push_back(base + k);
  return out;
}

/// Every sweep cell shares the repetition's seed, so demand paths are common
/// across risk and information settings.
inline std::vector<EpisodePlan> plan_episodes(const RunConfig& c) {
  const auto seeds = resolve_seeds(c);
  std::vector<std::optional<RiskPreference>> risks{std::nullopt};
  std::vector<std::optional<InfoMode>> modes{std::nullopt};
  if (c.scenario.sweep) {
    if (!c.scenario.sweep->risks.empty()) risks.assign(c.scenario.sweep->risks.begin(), c.scenario.sweep->risks.end());
    if (!c.scenario.sweep->info_modes.empty())
      modes.assign(c.scenario.sweep->info_modes.begin(), c.scenario.sweep->info_modes.end());
  }
  std::vector<EpisodePlan> plans;
  for (const auto& r : risks)
    for (const auto& m : modes)
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        EpisodePlan p;
        p.repetition = k;
        p.seed = seeds[k];
        p.risk = r;
        p.info_mode = m;
        std::string id;
        if (r) id += std::string(to_string(*r)) + "-";
        if (m) id += std::string(to_string(*m)) + "-";
        p.id = id + "rep" + std::to_string(k);
        plans.push_back(std::move(p));
      }
  return plans;
}

// ---------------------------------------------------------------------------
// Records

struct EpisodeRecord {
  std::string episode_id;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::string risk = "none";       // sweep setting or "none"
  std::string info_mode = "none";  // beer only
  json scenario;                   // snapshot(...) of the engine actually run
  std::vector<std::string> agent_ids;
  std::vector<std::vector<Units>> actions;    // [round][agent]
  std::vector<std::vector<bool>> fallbacks;   // [round][agent]
  std::vector<std::vector<bool>> clamped;     // [round][agent]
  std::vector<json> outcomes;                 // [round]
  std::vector<std::vector<double>> rewards;   // [round][agent]
  std::vector<double> cumulative_reward;      // per agent
  double total_reward = 0.0;
  bool flagged = false;
  std::string abort_reason;
  json metrics = json::object();

  bool is_beer() const { return scenario.at("game").at("type") == "beer"; }
  std::size_t fallback_count() const {
    std::size_t n = 0;
    for (const auto& r : fallbacks)
      for (bool f : r) n += f;
    return n;
  }
};

inline json to_json(const EpisodeRecord& r) {
  json rounds = json::array();
  for (std::size_t t = 0; t < r.actions.size(); ++t)
    rounds.push_back({{"index", t},
                      {"actions", r.actions[t]},
                      {"fallback", r.fallbacks[t]},
                      {"clamped", r.clamped[t]},
                      {"rewards", r.rewards[t]},
                      {"outcome", r.outcomes[t]}});
  return {{"episode", r.episode_id},
          {"repetition", r.repetition},
          {"seed", r.seed},
          {"risk", r.risk},
          {"info_mode", r.info_mode},
          {"scenario", r.scenario},
          {"agents", r.agent_ids},
          {"rounds", rounds},
          {"cumulative_reward", r.cumulative_reward},
          {"total_reward", r.total_reward},
          {"flagged", r.flagged},
          {"abort_reason", r.abort_reason},
          {"metrics", r.metrics}};
}

inline EpisodeRecord record_from_json(const json& j) {
  EpisodeRecord r;
  try {
    r.episode_id = j.at("episode").get<std::string>();
    r.repetition = j.at("repetition").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.risk = j.at("risk").get<std::string>();
    r.info_mode = j.at("info_mode").get<std::string>();
    r.scenario = j.at("scenario");
    r.agent_ids = j.at("agents").get<std::vector<std::string>>();
    for (const auto& round : j.at("rounds")) {
      r.actions.push_back(round.at("actions").get<std::vector<Units>>());
      r.fallbacks.push_back(round.at("fallback").get<std::vector<bool>>());
      r.clamped.push_back(round.at("clamped").get<std::vector<bool>>());
      r.rewards.push_back(round.at("rewards").get<std::vector<double>>());
      r.outcomes.push_back(round.at("outcome"));
    }
    r.cumulative_reward = j.at("cumulative_reward").get<std::vector<double>>();
    r.total_reward = j.at("total_reward").get<double>();
    r.flagged = j.at("flagged").get<bool>();
    r.abort_reason = j.at("abort_reason").get<std::string>();
    r.metrics = j.at("metrics");
  } catch (const json::exception& e) {
    throw RunError(std::string("malformed episode record: ") + e.what());
  }
  return r;
}

namespace detail {

inline json market_outcome_json(const MarketRound& round, const MarketState& state) {
  return {{"price", round.clearing.price ? json(*round.clearing.price) : json(nullptr)},
          {"sales", round.clearing.sales},
          {"profits", round.clearing.profits},
          {"cumulative_profit", state.cumulative_profit}};
}

inline std::vector<Units> beer_demand(const EpisodeRecord& r) {
  std::vector<Units> d;
  for (const auto& o : r.outcomes) d.push_back(o.at("demands").at(0).get<Units>());
  return d;
}

inline std::vector<std::vector<Units>> orders_by_agent(const EpisodeRecord& r) {
  std::vector<std::vector<Units>> out(r.agent_ids.size());
  for (const auto& round : r.actions)
    for (std::size_t i = 0; i < round.size(); ++i) out[i].push_back(round[i]);
  return out;
}

/// Metrics are recomputed from the stored series only.
inline json episode_metrics(const EpisodeRecord& r) {
  json m = json::object();
  if (r.actions.empty()) return m;
  if (r.is_beer()) {
    const auto demand = beer_demand(r);
    m["demand_variance"] = variance(demand);
    json ov = json::array();
    for (const auto& s : orders_by_agent(r)) ov.push_back(variance(s));
    m["order_variance"] = ov;
    try {
      m["amplification"] = amplification(orders_by_agent(r), demand).amplification;
    } catch (const MetricError& e) {
      m["amplification"] = nullptr;
      m["amplification_note"] = e.what();
    }
    return m;
  }
  const auto s = std::get<MarketScenario>(parse_snapshot(r.scenario));
  MarketState history = init(s);
  for (const auto& a : r.actions) play_round(history, a);
  try {
    const auto eq = equilibrium(s);
    const std::size_t k = std::min<std::size_t>(5, r.actions.size());
    const auto c = convergence(history, eq, k);
    m["equilibrium_actions"] = eq.actions;
    if (eq.market_price) m["equilibrium_price"] = *eq.market_price;
    m["trailing_window"] = k;
    m["trailing_action_deviation"] = c.trailing_action_deviation;
    if (c.trailing_price_deviation) m["trailing_price_deviation"] = *c.trailing_price_deviation;
  } catch (const NoEquilibriumError& e) {
    m["equilibrium_note"] = e.what();
  }
  return m;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RunError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  out.flush();
  if (!out) throw RunError("cannot write " + p.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Episode execution

/// Shared per-run context: one chat client per model id.
class ClientPool {
public:
  ClientPool(const ClientConfig& base, std::shared_ptr<Transport> transport, ChatClient::Sleeper sleeper)
      : base_(base), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {}

  ChatClient& for_model(const std::string& model_id) {
    std::lock_guard lock(mutex_);
    const std::string key = model_id.empty() ? base_.model_id : model_id;
    auto it = clients_.find(key);
    if (it == clients_.end()) {
      ClientConfig cfg = base_;
      cfg.model_id = key;
      it = clients_.emplace(key, std::make_unique<ChatClient>(cfg, transport_, sleeper_)).first;
    }
    return *it->second;
  }

private:
  ClientConfig base_;
  std::shared_ptr<Transport> transport_;
  ChatClient::Sleeper sleeper_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<ChatClient>> clients_;
};

namespace detail {

inline ChatClient* client_for(const AgentSpec& a, ClientPool* pool) {
  const auto* llm = std::get_if<LlmAgent>(&a.kind);
  if (!llm) return nullptr;
  if (!pool) throw RunError("LLM agent " + a.id + " requires a client");
  return &pool->for_model(llm->model_id);
}

inline std::optional<RiskPreference> agent_risk(const AgentSpec& a, const EpisodePlan& plan) {
  if (plan.risk) return plan.risk;
  if (const auto* llm = std::get_if<LlmAgent>(&a.kind)) return llm->risk;
  return std::nullopt;
}

inline void append_round(EpisodeRecord& rec, const std::vector<Decision>& decisions, const std::vector<Units>& actions,
                         const std::vector<double>& rewards, json outcome) {
  std::vector<bool> fb, cl;
  for (const auto& d : decisions) {
    fb.push_back(d.transcript.fallback);
    cl.push_back(d.transcript.clamped);
  }
  rec.actions.push_back(actions);
  rec.fallbacks.push_back(std::move(fb));
  rec.clamped.push_back(std::move(cl));
  rec.rewards.push_back(rewards);
  rec.outcomes.push_back(std::move(outcome));
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    rec.cumulative_reward[i] += rewards[i];
    rec.total_reward += rewards[i];
  }
}

inline void run_beer(const ScenarioFile& file, BeerScenario sc, const EpisodePlan& plan, ClientPool* pool,
                     TranscriptSink* sink, EpisodeRecord& rec, std::vector<std::string>& log) {
  BeerGameState state = init(sc);
  const std::size_t n = file.agents.size();
  std::vector<Rng> policy_rngs;
  for (std::size_t i = 0; i < n; ++i) policy_rngs.push_back(split_stream(sc.seed, Stream::policy_base, i));
  std::vector<std::optional<Units>> previous(n);

  while (!state.finished()) {
    std::vector<Units> orders(n, 0);
    std::vector<Decision> decisions;
    for (std::size_t i = 0; i < n; ++i) {
      const AgentSpec& agent = file.agents[i];
      ObservationWindows windows = file.windows;
      if (const auto* s = std::get_if<ScriptedAgent>(&agent.kind))
        if (const auto* t = std::get_if<TrackingDemandPolicy>(&s->policy))
          windows.sales = std::max(windows.sales, static_cast<std::size_t>(t->window));
      const Observation obs =
          observe(state, i, sc.info_mode, windows, i > 0 ? std::optional<Units>(orders[i - 1]) : std::nullopt);

      DecisionRequest req;
      req.episode_id = plan.id;
      req.round = state.period + 1;
      req.previous_action = previous[i];
      PromptBundle prompts;
      if (agent.is_llm()) {
        prompts = render_beer_prompts(sc, obs, agent_risk(agent, plan), sc.info_mode);
        req.prompts = &prompts;
      } else {
        const auto& policy = std::get<ScriptedAgent>(agent.kind).policy;
        req.scripted = [&, i]() -> Units {
          if (const auto* b = std::get_if<BaseStockPolicy>(&policy)) return base_stock_order(obs, obs.capacity, b->target);
          if (const auto* t = std::get_if<TrackingDemandPolicy>(&policy))
            return tracking_demand_order(obs, obs.lead_time, t->window);
          if (const auto* r = std::get_if<RandomUniformPolicy>(&policy)) return random_uniform_action(*r, policy_rngs[i]);
          throw PolicyError(std::string("policy ") + policy_name(policy) + " does not apply to the beer game");
        };
      }
      decisions.push_back(decide(agent, req, client_for(agent, pool), sink));
      orders[i] = decisions.back().action;
      previous[i] = orders[i];
    }
    const StepOutcome out = scmlab::advance(state, orders);
    json entry = period_log_entry(state, out);
    append_round(rec, decisions, orders, out.rewards, entry);
    entry["outcome_box"] = render_beer_outcome(out.period, orders, out.rewards, rec.total_reward);
    log.push_back(entry.dump());
  }
}

inline void run_market(const ScenarioFile& file, const MarketScenario& sc, const EpisodePlan& plan,
                       ClientPool* pool, TranscriptSink* sink, EpisodeRecord& rec, std::vector<std::string>& log) {
  MarketState state = init(sc);
  const std::size_t n = file.agents.size();
  std::vector<Rng> policy_rngs;
  for (std::size_t i = 0; i < n; ++i) policy_rngs.push_back(split_stream(sc.seed, Stream::policy_base, i));

  std::optional<EquilibriumSolution> eq;
  auto need_eq = [&]() -> const EquilibriumSolution& {
    if (!eq) eq = equilibrium(sc);
    return *eq;
  };

  MarketPromptOptions options;
  options.history_window = file.market_history_window;
  for (std::size_t i = 0; i < n; ++i)
    options.firm_names.push_back(file.agents[i].name.empty() ? "Firm_" + std::to_string(i + 1) : file.agents[i].name);

  while (!state.finished()) {
    const Units round = static_cast<Units>(state.rounds.size()) + 1;
    const std::vector<Units>* last = state.rounds.empty() ? nullptr : &state.rounds.back().actions;
    std::vector<Units> actions(n, 0);
    std::vector<Decision> decisions;
    // Everyone decides against the same pre-round state.
    for (std::size_t i = 0; i < n; ++i) {
      const AgentSpec& agent = file.agents[i];
      DecisionRequest req;
      req.episode_id = plan.id;
      req.round = round;
      if (last) req.previous_action = (*last)[i];
      PromptBundle prompts;
      if (agent.is_llm()) {
        prompts = render_market_prompts(sc, i, round, state, options);
        req.prompts = &prompts;
      } else {
        const auto& policy = std::get<ScriptedAgent>(agent.kind).policy;
        req.scripted = [&, i]() -> Units {
          if (std::holds_alternative<NashFixedPolicy>(policy)) return nash_fixed_action(need_eq(), i);
          if (std::holds_alternative<MyopicBestResponsePolicy>(policy)) return myopic_best_response(sc, i, last);
          if (const auto* r = std::get_if<RandomUniformPolicy>(&policy)) return random_uniform_action(*r, policy_rngs[i]);
          throw PolicyError(std::string("policy ") + policy_name(policy) + " does not apply to market games");
        };
      }
      decisions.push_back(decide(agent, req, client_for(agent, pool), sink));
      actions[i] = decisions.back().action;
    }
    const MarketRound& played = play_round(state, actions);
    json entry = detail::market_outcome_json(played, state);
    append_round(rec, decisions, actions, played.clearing.profits, entry);
    entry["round"] = round;
    entry["actions"] = actions;
    entry["outcome_box"] = render_market_outcome(sc, round, actions, played.clearing, total_cumulative_profit(state));
    log.push_back(entry.dump());
  }
}

}  // namespace detail

struct EpisodeResult {
  EpisodeRecord record;
  std::vector<std::string> log_lines;
};

/// Runs one episode. Agent, client, policy and engine failures abort the
/// episode and return a flagged partial record instead of throwing.
inline EpisodeResult run_episode(const ScenarioFile& file, const EpisodePlan& plan, ClientPool* pool,
                                 TranscriptSink* sink) {
  EpisodeResult result;
  EpisodeRecord& rec = result.record;
  rec.episode_id = plan.id;
  rec.repetition = plan.repetition;
  rec.seed = plan.seed;
  if (plan.risk) rec.risk = to_string(*plan.risk);
  for (const auto& a : file.agents) rec.agent_ids.push_back(a.id);
  rec.cumulative_reward.assign(file.agents.size(), 0.0);

  try {
    if (file.is_beer()) {
      BeerScenario sc = std::get<BeerScenario>(file.game);
      sc.seed = plan.seed;
      if (plan.info_mode) sc.info_mode = *plan.info_mode;
      rec.info_mode = to_string(sc.info_mode);
      rec.scenario = snapshot(sc);
      detail::run_beer(file, sc, plan, pool, sink, rec, result.log_lines);
    } else {
      MarketScenario sc = std::get<MarketScenario>(file.game);
      sc.seed = plan.seed;
      rec.scenario = snapshot(sc);
      detail::run_market(file, sc, plan, pool, sink, rec, result.log_lines);
    }
  } catch (const AgentError& e) {
    rec.flagged = true;
    rec.abort_reason = e.what();
  } catch (const std::exception& e) {
    rec.flagged = true;
    rec.abort_reason = e.what();
  }
  rec.metrics = detail::episode_metrics(rec);
  return result;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayReport {
  bool matches = true;
  std::vector<std::string> mismatches;
};

/// Feeds the recorded actions back through a fresh engine and compares every
/// recorded outcome field.
inline ReplayReport replay(const EpisodeRecord& rec) {
  ReplayReport report;
  auto mismatch = [&](std::size_t t, const std::string& what) {
    report.matches = false;
    report.mismatches.push_back("round index " + std::to_string(t) + ": " + what);
  };
  const auto game = parse_snapshot(rec.scenario);
  if (const auto* beer = std::get_if<BeerScenario>(&game)) {
    BeerGameState state = init(*beer);
    for (std::size_t t = 0; t < rec.actions.size(); ++t) {
      const StepOutcome out = scmlab::advance(state, rec.actions[t]);
      const json entry = period_log_entry(state, out);
      if (entry != rec.outcomes[t]) mismatch(t, "outcome differs: " + entry.dump() + " vs " + rec.outcomes[t].dump());
      if (out.rewards != rec.rewards[t]) mismatch(t, "rewards differ");
    }
  } else {
    MarketState state = init(std::get<MarketScenario>(game));
    for (std::size_t t = 0; t < rec.actions.size(); ++t) {
      const MarketRound& round = play_round(state, rec.actions[t]);
      const json entry = detail::market_outcome_json(round, state);
      if (entry != rec.outcomes[t]) mismatch(t, "outcome differs: " + entry.dump() + " vs " + rec.outcomes[t].dump());
      if (round.clearing.profits != rec.rewards[t]) mismatch(t, "rewards differ");
    }
  }
  return report;
}

/// Compares one recorded period's per-agent rewards with reference values
/// and lists every difference.
inline std::vector<std::string> compare_rewards(const EpisodeRecord& rec, std::size_t period,
                                                const std::vector<double>& expected) {
  std::vector<std::string> out;
  if (period >= rec.rewards.size()) {
    out.push_back("period " + std::to_string(period) + " was not played");
    return out;
  }
  const auto& got = rec.rewards[period];
  if (got.size() != expected.size()) {
    out.push_back("reward count differs");
    return out;
  }
  for (std::size_t i = 0; i < got.size(); ++i)
    if (got[i] != expected[i])
      out.push_back("period " + std::to_string(period) + " stage " + std::to_string(i) + ": recorded " +
                    fmt::compact(got[i]) + ", reference " + fmt::compact(expected[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate tables

struct MetricsRow {
  std::string risk;
  std::string info_mode;
  std::size_t stage = 0;
  std::string role;
  std::size_t episodes = 0;
  Spread order_variance;
  Spread demand_variance;
  Spread amplification;
  std::optional<double> information_gain;
};

/// One row per (risk, info_mode, stage) over unflagged beer episodes.
/// Information gain compares the mean amplification with and without
/// sharing for the same risk and stage.
inline std::vector<MetricsRow> metrics_table(const std::vector<EpisodeRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::size_t>;
  std::map<Key, std::vector<const EpisodeRecord*>> groups;
  for (const auto& r : records) {
    if (!r.is_beer() || r.flagged || r.actions.empty()) continue;
    for (std::size_t s = 0; s < r.agent_ids.size(); ++s) groups[{r.risk, r.info_mode, s}].push_back(&r);
  }
  std::vector<MetricsRow> rows;
  for (const auto& [key, recs] : groups) {
    MetricsRow row;
    std::tie(row.risk, row.info_mode, row.stage) = key;
    row.role = stage_role(row.stage, recs.front()->agent_ids.size());
    row.episodes = recs.size();
    std::vector<double> ov, dv, amp;
    for (const auto* r : recs) {
      const auto demand = detail::beer_demand(*r);
      const auto orders = detail::orders_by_agent(*r);
      ov.push_back(variance(orders[row.stage]));
      dv.push_back(variance(demand));
      if (dv.back() > 0.0) amp.push_back(ov.back() / dv.back());
    }
    row.order_variance = spread(ov);
    row.demand_variance = spread(dv);
    row.amplification = spread(amp);
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    if (row.amplification.count == 0) continue;
    const MetricsRow* isolated = nullptr;
    const MetricsRow* sharing = nullptr;
    for (const auto& other : rows) {
      if (other.risk != row.risk || other.stage != row.stage || other.amplification.count == 0) continue;
      if (other.info_mode == "isolated") isolated = &other;
      if (other.info_mode == "sharing") sharing = &other;
    }
    if (isolated && sharing && isolated->amplification.mean != 0.0)
      row.information_gain = information_gain(isolated->amplification.mean, sharing->amplification.mean);
  }
  return rows;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "risk,info_mode,stage,role,episodes,order_variance,order_variance_sd,demand_variance,amplification,"
      "amplification_sd,information_gain\n";
  for (const auto& r : rows) {
    const bool amp = r.amplification.count > 0;
    out += r.risk + "," + r.info_mode + "," + std::to_string(r.stage) + "," + r.role + "," +
           std::to_string(r.episodes) + "," + fmt::fixed(r.order_variance.mean, 6) + "," +
           fmt::fixed(r.order_variance.stddev, 6) + "," + fmt::fixed(r.demand_variance.mean, 6) + "," +
           (amp ? fmt::fixed(r.amplification.mean, 6) : "") + "," +
           (amp ? fmt::fixed(r.amplification.stddev, 6) : "") + "," +
           (r.information_gain ? fmt::fixed(*r.information_gain, 2) : "") + "\n";
  }
  return out;
}

inline std::string convergence_csv(const std::vector<EpisodeRecord>& records) {
  std::string out = "episode,firm,equilibrium_action,trailing_window,trailing_action_deviation,trailing_price_deviation\n";
  for (const auto& r : records) {
    if (r.is_beer() || !r.metrics.contains("trailing_action_deviation")) continue;
    const auto& m = r.metrics;
    for (std::size_t i = 0; i < r.agent_ids.size(); ++i)
      out += r.episode_id + "," + std::to_string(i + 1) + "," + fmt::fixed(m["equilibrium_actions"][i].get<double>(), 6) +
             "," + std::to_string(m["trailing_window"].get<std::size_t>()) + "," +
             fmt::fixed(m["trailing_action_deviation"][i].get<double>(), 6) + "," +
             (m.contains("trailing_price_deviation") ? fmt::fixed(m["trailing_price_deviation"].get<double>(), 6) : "") +
             "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run directories

struct RunSummary {
  std::filesystem::path dir;
  std::vector<EpisodeRecord> episodes;
  bool all_clean() const {
    for (const auto& e : episodes)
      if (e.flagged) return false;
    return true;
  }
};

inline json make_manifest(const RunConfig& c, const std::vector<EpisodePlan>& plans,
                          const std::vector<EpisodeRecord>& records) {
  const std::string scenario_text = c.scenario.source.dump();
  json episodes = json::array();
  for (std::size_t i = 0; i < plans.size(); ++i)
    episodes.push_back({{"id", plans[i].id},
                        {"seed", plans[i].seed},
                        {"repetition", plans[i].repetition},
                        {"risk", plans[i].risk ? json(to_string(*plans[i].risk)) : json(nullptr)},
                        {"info_mode", plans[i].info_mode ? json(to_string(*plans[i].info_mode)) : json(nullptr)},
                        {"flagged", records[i].flagged},
                        {"fallbacks", records[i].fallback_count()}});
  const std::vector<std::uint64_t> seeds = resolve_seeds(c);
  return {{"tool", "scmlab"},
          {"version", version},
          {"scenario_name", c.scenario.name},
          {"scenario_file", c.scenario_path.filename().string()},
          {"scenario", c.scenario.source},
          {"scenario_hash", hex64(fnv1a(scenario_text))},
          {"repetitions", c.repetitions},
          {"seeds", seeds},
          {"mock", c.mock},
          {"client", {{"endpoint_url", c.scenario.client.endpoint_url},
                      {"model_id", c.scenario.client.model_id},
                      {"auth_env", c.scenario.client.auth_env}}},
          {"episodes", episodes}};
}

/// Executes every planned episode and writes the run directory.
inline RunSummary run(const RunConfig& config) {
  const auto plans = plan_episodes(config);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec || !fs::is_directory(config.out_dir))
    throw RunError("output directory is not writable: " + config.out_dir.string());

  bool needs_client = false;
  for (const auto& a : config.scenario.agents) needs_client = needs_client || a.is_llm();

  std::vector<EpisodeResult> results(plans.size());
  // Mock replies are keyed by the repetition seed, so each episode gets its
  // own pool when mocking.
  std::unique_ptr<ClientPool> live_pool;
  if (needs_client && !config.mock) {
    auto transport = config.transport ? config.transport : std::make_shared<HttpTransport>();
    live_pool = std::make_unique<ClientPool>(config.scenario.client, transport, config.sleeper);
  }

  auto run_one = [&](std::size_t k) {
    const auto& plan = plans[k];
    const fs::path tdir = config.out_dir / "transcripts" / plan.id;
    fs::remove_all(tdir);
    TranscriptSink sink(needs_client ? tdir : fs::path{});
    std::unique_ptr<ClientPool> mock_pool;
    ClientPool* pool = live_pool.get();
    if (needs_client && config.mock) {
      ClientConfig cfg = config.scenario.client;
      cfg.auth_env.clear();
      auto transport = config.transport ? config.transport : make_mock_transport(config.scenario.mock, plan.seed);
      mock_pool = std::make_unique<ClientPool>(cfg, transport, config.sleeper ? config.sleeper : ChatClient::Sleeper([](double) {}));
      pool = mock_pool.get();
    }
    results[k] = run_episode(config.scenario, plan, pool, needs_client ? &sink : nullptr);
  };

  const std::size_t workers = std::clamp<std::size_t>(config.parallelism, 1, plans.size());
  if (workers == 1) {
    for (std::size_t k = 0; k < plans.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < plans.size(); k = next++) run_one(k);
      });
    for (auto& t : pool) t.join();
  }

  RunSummary summary;
  summary.dir = config.out_dir;
  for (std::size_t k = 0; k < plans.size(); ++k) {
    const fs::path edir = config.out_dir / "episodes" / plans[k].id;
    detail::write_file(edir / "record.json", to_json(results[k].record).dump(2) + "\n");
    std::string log;
    for (const auto& line : results[k].log_lines) log += line + "\n";
    detail::write_file(edir / "log.jsonl", log);
    summary.episodes.push_back(std::move(results[k].record));
  }
  detail::write_file(config.out_dir / "manifest.json", make_manifest(config, plans, summary.episodes).dump(2) + "\n");
  if (config.scenario.is_beer())
    detail::write_file(config.out_dir / "metrics.csv", metrics_csv(metrics_table(summary.episodes)));
  else
    detail::write_file(config.out_dir / "convergence.csv", convergence_csv(summary.episodes));
  return summary;
}

struct LoadedRun {
  json manifest;
  std::vector<EpisodeRecord> episodes;
};

inline LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun out;
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw RunError("no manifest.json in " + dir.string());
  out.manifest = json::parse(detail::read_file(manifest_path));
  for (const auto& e : out.manifest.at("episodes")) {
    const auto path = dir / "episodes" / e.at("id").get<std::string>() / "record.json";
    if (!std::filesystem::exists(path)) throw RunError("missing episode record " + path.string());
    out.episodes.push_back(record_from_json(json::parse(detail::read_file(path))));
  }
  if (out.episodes.empty()) throw RunError("run has no episodes");
  return out;
}

/// Rebuilds a RunConfig from a manifest alone.
inline RunConfig config_from_manifest(const std::filesystem::path& dir, const std::filesystem::path& out_dir) {
  const json manifest = json::parse(detail::read_file(dir / "manifest.json"));
  RunConfig c;
  c.scenario = parse_scenario(manifest.at("scenario"));
  c.scenario_path = manifest.at("scenario_file").get<std::string>();
  c.repetitions = manifest.at("repetitions").get<std::size_t>();
  c.seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
  c.mock = manifest.at("mock").get<bool>();
  c.out_dir = out_dir;
  return c;
}

// ---------------------------------------------------------------------------
// Plot data

/// Writes per-episode trajectory CSVs and, for beer runs, amplification.csv
/// under <run>/plot. Returns the files written.
inline std::vector<std::filesystem::path> emit_plot_data(const std::filesystem::path& dir) {
  const LoadedRun loaded = load_run(dir);
  const auto out_dir = dir / "plot";
  std::vector<std::filesystem::path> written;

  for (const auto& r : loaded.episodes) {
    const std::size_t n = r.agent_ids.size();
    std::string csv;
    if (r.is_beer()) {
      csv = "period";
      for (std::size_t i = 0; i < n; ++i) csv += "," + stage_role(i, n);
      csv += ",demand\n";
      const auto demand = detail::beer_demand(r);
      for (std::size_t t = 0; t < r.actions.size(); ++t) {
        csv += std::to_string(t + 1);
        for (Units o : r.actions[t]) csv += "," + std::to_string(o);
        csv += "," + std::to_string(demand[t]) + "\n";
      }
      const auto p = out_dir / (r.episode_id + "_orders.csv");
      detail::write_file(p, csv);
      written.push_back(p);
      continue;
    }

    const auto s = std::get<MarketScenario>(parse_snapshot(r.scenario));
    const bool cournot = std::holds_alternative<CournotMarket>(s.model);
    const std::string a = cournot ? "q" : "p";
    std::optional<EquilibriumSolution> eq;
    try {
      eq = equilibrium(s);
    } catch (const NoEquilibriumError&) {
    }
    bool symmetric = eq.has_value();
    if (eq)
      for (double v : eq->actions) symmetric = symmetric && std::fabs(v - eq->actions.front()) < 1e-12;

    csv = "round";
    for (std::size_t i = 0; i < n; ++i) csv += "," + a + "_firm" + std::to_string(i + 1);
    if (symmetric) csv += "," + a + "_star";
    else
      for (std::size_t i = 0; i < n; ++i) csv += "," + a + "_star_firm" + std::to_string(i + 1);
    if (cournot) csv += ",price,price_star";
    csv += "\n";
    for (std::size_t t = 0; t < r.actions.size(); ++t) {
      csv += std::to_string(t + 1);
      for (Units v : r.actions[t]) csv += "," + std::to_string(v);
      if (symmetric) csv += "," + fmt::fixed(eq->actions.front(), 6);
      else
        for (std::size_t i = 0; i < n; ++i) csv += "," + (eq ? fmt::fixed(eq->actions[i], 6) : std::string{});
      if (cournot) {
        const auto& price = r.outcomes[t].at("price");
        csv += "," + (price.is_null() ? std::string{} : fmt::fixed(price.get<double>(), 6));
        csv += "," + (eq && eq->market_price ? fmt::fixed(*eq->market_price, 6) : std::string{});
      }
      csv += "\n";
    }
    const auto p = out_dir / (r.episode_id + "_actions.csv");
    detail::write_file(p, csv);
    written.push_back(p);
  }

  const auto rows = metrics_table(loaded.episodes);
  if (!rows.empty()) {
    std::string csv = "risk,info_mode,stage,role,amplification\n";
    for (const auto& row : rows)
      csv += row.risk + "," + row.info_mode + "," + std::to_string(row.stage) + "," + row.role + "," +
             (row.amplification.count ? fmt::fixed(row.amplification.mean, 6) : "") + "\n";
    const auto p = out_dir / "amplification.csv";
    detail::write_file(p, csv);
    written.push_back(p);
  }
  return written;
}

}  // namespace scmlab
