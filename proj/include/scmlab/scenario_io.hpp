#pragma once

// Scenario files: one JSON document describing the game, the agent roster,
// observation windows, optional risk/information sweeps, the chat client and
// the offline mock. Unknown keys are rejected everywhere.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "scmlab/agents.hpp"

namespace scmlab {

using json = nlohmann::json;

struct SweepSpec {
  std::vector<RiskPreference> risks;
  std::vector<InfoMode> info_modes;
};

/// Offline stand-in for a chat endpoint. Replies are scripted per agent and
/// round when given, otherwise a seeded integer in [lo, hi]; a seeded
/// fraction of replies carry no decision.
///
/// A scripted entry lists the replies to successive attempts of one
/// decision; attempts past the end of the list get the seeded reply. A single
/// string in the scenario file is a one-element list.
struct MockSpec {
  Units lo = 0;
  Units hi = 16;
  double garbage_rate = 0.0;
  std::map<std::string, std::map<Units, std::vector<std::string>>> replies;  // agent -> round -> attempts
};

struct ScenarioFile {
  std::string name;
  std::variant<BeerScenario, MarketScenario> game;
  std::vector<AgentSpec> agents;
  ObservationWindows windows;
  std::size_t market_history_window = 5;
  std::optional<SweepSpec> sweep;
  ClientConfig client;
  MockSpec mock;
  json source;  // the document as read

  bool is_beer() const { return std::holds_alternative<BeerScenario>(game); }
};

namespace io {

inline void expect_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(path + ": unknown key '" + key + "'");
  }
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& need(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(join(path, key) + ": required");
  return obj.at(key);
}

inline Units as_units(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return v.get<Units>();
}

inline double as_real(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

inline bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
  return v.get<bool>();
}

template <typename F>
auto as_list(const json& v, const std::string& path, F&& item) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array");
  std::vector<decltype(item(v, path))> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(item(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<Units> units_list(const json& v, const std::string& path) { return as_list(v, path, as_units); }
inline std::vector<double> real_list(const json& v, const std::string& path) { return as_list(v, path, as_real); }

inline RiskPreference parse_risk(const json& v, const std::string& path) {
  const std::string s = as_string(v, path);
  if (s == "averse") return RiskPreference::averse;
  if (s == "neutral") return RiskPreference::neutral;
  if (s == "appetite") return RiskPreference::appetite;
  throw ConfigError(path + ": risk must be averse, neutral or appetite");
}

inline InfoMode parse_info_mode(const json& v, const std::string& path) {
  const std::string s = as_string(v, path);
  if (s == "isolated") return InfoMode::isolated;
  if (s == "sharing") return InfoMode::sharing;
  throw ConfigError(path + ": info_mode must be isolated or sharing");
}

inline DemandModel parse_demand(const json& v, const std::string& path) {
  const std::string type = as_string(need(v, "type", path), join(path, "type"));
  if (type == "constant") {
    expect_keys(v, {"type", "level"}, path);
    return ConstantDemand{as_units(need(v, "level", path), join(path, "level"))};
  }
  if (type == "uniform_int") {
    expect_keys(v, {"type", "lo", "hi"}, path);
    return UniformIntDemand{as_units(need(v, "lo", path), join(path, "lo")),
                            as_units(need(v, "hi", path), join(path, "hi"))};
  }
  if (type == "seasonal_uniform") {
    expect_keys(v, {"type", "phases"}, path);
    SeasonalUniformDemand d;
    d.phases = as_list(need(v, "phases", path), join(path, "phases"), [](const json& p, const std::string& pp) {
      expect_keys(p, {"length", "lo", "hi"}, pp);
      return DemandPhase{as_units(need(p, "length", pp), join(pp, "length")),
                         as_units(need(p, "lo", pp), join(pp, "lo")),
                         as_units(need(p, "hi", pp), join(pp, "hi"))};
    });
    return d;
  }
  if (type == "normal_rounded") {
    expect_keys(v, {"type", "mean", "sd"}, path);
    return NormalRoundedDemand{as_real(need(v, "mean", path), join(path, "mean")),
                               as_real(need(v, "sd", path), join(path, "sd"))};
  }
  throw ConfigError(join(path, "type") + ": unknown demand type '" + type + "'");
}

inline json demand_to_json(const DemandModel& m) {
  struct Visitor {
    json operator()(const ConstantDemand& d) const { return {{"type", "constant"}, {"level", d.level}}; }
    json operator()(const UniformIntDemand& d) const { return {{"type", "uniform_int"}, {"lo", d.lo}, {"hi", d.hi}}; }
    json operator()(const SeasonalUniformDemand& d) const {
      json phases = json::array();
      for (const auto& p : d.phases) phases.push_back({{"length", p.length}, {"lo", p.lo}, {"hi", p.hi}});
      return {{"type", "seasonal_uniform"}, {"phases", phases}};
    }
    json operator()(const NormalRoundedDemand& d) const {
      return {{"type", "normal_rounded"}, {"mean", d.mean}, {"sd", d.sd}};
    }
  };
  return std::visit(Visitor{}, m);
}

inline BeerScenario parse_beer(const json& g, const std::string& path) {
  expect_keys(g, {"type", "num_stages", "horizon", "initial_inventory", "lead_time", "capacity",
                  "holding_cost", "backlog_cost", "demand", "info_mode"},
              path);
  BeerScenario s;
  s.num_stages = static_cast<int>(as_units(need(g, "num_stages", path), join(path, "num_stages")));
  s.horizon = as_units(need(g, "horizon", path), join(path, "horizon"));
  s.initial_inventory = units_list(need(g, "initial_inventory", path), join(path, "initial_inventory"));
  s.lead_time = units_list(need(g, "lead_time", path), join(path, "lead_time"));
  s.capacity = units_list(need(g, "capacity", path), join(path, "capacity"));
  s.holding_cost = real_list(need(g, "holding_cost", path), join(path, "holding_cost"));
  s.backlog_cost = real_list(need(g, "backlog_cost", path), join(path, "backlog_cost"));
  s.demand = parse_demand(need(g, "demand", path), join(path, "demand"));
  if (g.contains("info_mode")) s.info_mode = parse_info_mode(g["info_mode"], join(path, "info_mode"));
  return s;
}

inline MarketModel parse_market(const json& g, const std::string& path) {
  const std::string type = as_string(need(g, "type", path), join(path, "type"));
  if (type == "cournot") {
    expect_keys(g, {"type", "a", "b", "costs"}, path);
    return CournotMarket{as_real(need(g, "a", path), join(path, "a")), as_real(need(g, "b", path), join(path, "b")),
                         real_list(need(g, "costs", path), join(path, "costs"))};
  }
  if (type == "bertrand_homogeneous") {
    expect_keys(g, {"type", "a", "b", "costs", "tick"}, path);
    BertrandHomogeneousMarket m{as_real(need(g, "a", path), join(path, "a")),
                                as_real(need(g, "b", path), join(path, "b")),
                                real_list(need(g, "costs", path), join(path, "costs")), 1.0};
    if (g.contains("tick")) m.tick = as_real(g["tick"], join(path, "tick"));
    return m;
  }
  if (type == "bertrand_differentiated") {
    expect_keys(g, {"type", "intercepts", "slopes", "substitution", "heterogeneity", "substitution_base", "costs"},
                path);
    BertrandDifferentiatedMarket m;
    m.costs = real_list(need(g, "costs", path), join(path, "costs"));
    m.intercepts = real_list(need(g, "intercepts", path), join(path, "intercepts"));
    m.slopes = real_list(need(g, "slopes", path), join(path, "slopes"));
    const bool explicit_d = g.contains("substitution");
    const bool from_h = g.contains("heterogeneity");
    if (explicit_d == from_h)
      throw ConfigError(path + ": give exactly one of 'substitution' or 'heterogeneity'");
    if (explicit_d) {
      m.substitution = as_list(g["substitution"], join(path, "substitution"), real_list);
    } else {
      const double base = as_real(need(g, "substitution_base", path), join(path, "substitution_base"));
      m.substitution = substitution_from_heterogeneity(real_list(g["heterogeneity"], join(path, "heterogeneity")), base);
    }
    return m;
  }
  throw ConfigError(join(path, "type") + ": unknown game type '" + type + "'");
}

inline PolicyConfig parse_policy(const json& p, const std::string& path) {
  const std::string type = as_string(need(p, "type", path), join(path, "type"));
  if (type == "base_stock") {
    expect_keys(p, {"type", "target"}, path);
    BaseStockPolicy b;
    if (p.contains("target")) b.target = as_units(p["target"], join(path, "target"));
    return b;
  }
  if (type == "tracking_demand") {
    expect_keys(p, {"type", "window"}, path);
    TrackingDemandPolicy t;
    if (p.contains("window")) t.window = as_units(p["window"], join(path, "window"));
    if (t.window < 1) throw ConfigError(join(path, "window") + ": must be >= 1");
    return t;
  }
  if (type == "nash_fixed") {
    expect_keys(p, {"type"}, path);
    return NashFixedPolicy{};
  }
  if (type == "myopic_best_response") {
    expect_keys(p, {"type"}, path);
    return MyopicBestResponsePolicy{};
  }
  if (type == "random_uniform") {
    expect_keys(p, {"type", "lo", "hi"}, path);
    RandomUniformPolicy r{as_units(need(p, "lo", path), join(path, "lo")), as_units(need(p, "hi", path), join(path, "hi"))};
    if (r.lo > r.hi) throw ConfigError(path + ": lo must not exceed hi");
    return r;
  }
  throw ConfigError(join(path, "type") + ": unknown policy '" + type + "'");
}

inline AgentSpec parse_agent(const json& a, const std::string& path) {
  AgentSpec spec;
  spec.id = as_string(need(a, "id", path), join(path, "id"));
  if (a.contains("name")) spec.name = as_string(a["name"], join(path, "name"));
  const std::string type = as_string(need(a, "type", path), join(path, "type"));
  if (type == "scripted") {
    expect_keys(a, {"id", "name", "type", "policy", "bounds"}, path);
    spec.kind = ScriptedAgent{parse_policy(need(a, "policy", path), join(path, "policy"))};
  } else if (type == "llm") {
    expect_keys(a, {"id", "name", "type", "model_id", "temperature", "risk", "max_retries", "bounds"}, path);
    LlmAgent llm;
    if (a.contains("model_id")) llm.model_id = as_string(a["model_id"], join(path, "model_id"));
    if (a.contains("temperature")) llm.temperature = as_real(a["temperature"], join(path, "temperature"));
    if (a.contains("risk")) llm.risk = parse_risk(a["risk"], join(path, "risk"));
    if (a.contains("max_retries"))
      llm.max_retries = static_cast<int>(as_units(a["max_retries"], join(path, "max_retries")));
    spec.kind = llm;
  } else {
    throw ConfigError(join(path, "type") + ": agent type must be scripted or llm");
  }
  if (a.contains("bounds")) {
    const auto b = units_list(a["bounds"], join(path, "bounds"));
    if (b.size() != 2) throw ConfigError(join(path, "bounds") + ": expected [lo, hi]");
    spec.bounds = ActionBounds{b[0], b[1]};
  }
  return spec;
}

inline ClientConfig parse_client(const json& c, const std::string& path) {
  expect_keys(c, {"endpoint_url", "auth_env", "model_id", "timeout_s", "max_transport_retries", "backoff_base_s",
                  "max_tokens", "concurrency"},
              path);
  ClientConfig cfg;
  if (c.contains("endpoint_url")) cfg.endpoint_url = as_string(c["endpoint_url"], join(path, "endpoint_url"));
  if (c.contains("auth_env")) cfg.auth_env = as_string(c["auth_env"], join(path, "auth_env"));
  if (c.contains("model_id")) cfg.model_id = as_string(c["model_id"], join(path, "model_id"));
  if (c.contains("timeout_s")) cfg.timeout_s = as_real(c["timeout_s"], join(path, "timeout_s"));
  if (c.contains("max_transport_retries"))
    cfg.max_transport_retries = static_cast<int>(as_units(c["max_transport_retries"], join(path, "max_transport_retries")));
  if (c.contains("backoff_base_s")) cfg.backoff_base_s = as_real(c["backoff_base_s"], join(path, "backoff_base_s"));
  if (c.contains("max_tokens")) cfg.max_tokens = static_cast<int>(as_units(c["max_tokens"], join(path, "max_tokens")));
  if (c.contains("concurrency")) cfg.concurrency = static_cast<int>(as_units(c["concurrency"], join(path, "concurrency")));
  if (!(cfg.timeout_s > 0.0)) throw ConfigError(join(path, "timeout_s") + ": must be > 0");
  if (cfg.max_transport_retries < 0) throw ConfigError(join(path, "max_transport_retries") + ": must be >= 0");
  return cfg;
}

inline MockSpec parse_mock(const json& m, const std::string& path) {
  expect_keys(m, {"lo", "hi", "garbage_rate", "replies"}, path);
  MockSpec spec;
  if (m.contains("lo")) spec.lo = as_units(m["lo"], join(path, "lo"));
  if (m.contains("hi")) spec.hi = as_units(m["hi"], join(path, "hi"));
  if (m.contains("garbage_rate")) spec.garbage_rate = as_real(m["garbage_rate"], join(path, "garbage_rate"));
  if (spec.lo > spec.hi || spec.lo < 0) throw ConfigError(path + ": need 0 <= lo <= hi");
  if (spec.garbage_rate < 0.0 || spec.garbage_rate > 1.0) throw ConfigError(join(path, "garbage_rate") + ": must be in [0, 1]");
  if (m.contains("replies")) {
    const auto& r = m["replies"];
    if (!r.is_object()) throw ConfigError(join(path, "replies") + ": expected an object");
    for (const auto& [agent, rounds] : r.items()) {
      const std::string ap = join(path, "replies." + agent);
      if (!rounds.is_object()) throw ConfigError(ap + ": expected an object keyed by round");
      for (const auto& [round, text] : rounds.items()) {
        Units k = 0;
        const auto [ptr, ec] = std::from_chars(round.data(), round.data() + round.size(), k);
        if (ec != std::errc{} || ptr != round.data() + round.size() || k < 1)
          throw ConfigError(ap + ": round keys must be positive integers");
        auto& attempts = spec.replies[agent][k];
        if (text.is_array()) {
          if (text.empty()) throw ConfigError(ap + "." + round + ": reply list is empty");
          for (std::size_t i = 0; i < text.size(); ++i)
            attempts.push_back(as_string(text[i], ap + "." + round + "[" + std::to_string(i) + "]"));
        } else {
          attempts.push_back(as_string(text, ap + "." + round));
        }
      }
    }
  }
  return spec;
}

inline ObservationWindows parse_windows(const json& o, const std::string& path) {
  expect_keys(o, {"sales", "received_orders", "rewards", "demands", "upstream_backlog_when_isolated"}, path);
  ObservationWindows w;
  auto size = [&](const char* key, std::size_t& dst) {
    if (!o.contains(key)) return;
    const Units v = as_units(o[key], join(path, key));
    if (v < 0) throw ConfigError(join(path, key) + ": must be >= 0");
    dst = static_cast<std::size_t>(v);
  };
  size("sales", w.sales);
  size("received_orders", w.received_orders);
  size("rewards", w.rewards);
  size("demands", w.demands);
  if (o.contains("upstream_backlog_when_isolated"))
    w.upstream_backlog_when_isolated = as_bool(o["upstream_backlog_when_isolated"], join(path, "upstream_backlog_when_isolated"));
  return w;
}

}  // namespace io

/// Parses and validates a scenario document. Throws ConfigError (or
/// ValidationError with every invariant violation).
inline ScenarioFile parse_scenario(const json& doc) {
  using namespace io;
  expect_keys(doc, {"name", "seed", "rounds", "game", "agents", "observation", "prompt", "sweep", "client", "mock"}, "");
  ScenarioFile f;
  f.source = doc;
  f.name = doc.contains("name") ? as_string(doc["name"], "name") : "scenario";
  const auto seed = doc.contains("seed") ? as_units(doc["seed"], "seed") : 0;
  if (seed < 0) throw ConfigError("seed: must be >= 0");

  const json& g = need(doc, "game", "");
  const std::string type = as_string(need(g, "type", "game"), "game.type");
  std::vector<ValidationIssue> issues;
  if (type == "beer") {
    if (doc.contains("rounds")) throw ConfigError("rounds: beer scenarios use game.horizon");
    BeerScenario s = parse_beer(g, "game");
    s.seed = static_cast<std::uint64_t>(seed);
    for (auto& i : validate(s)) issues.push_back({"game." + i.path, i.message});
    f.game = s;
  } else {
    MarketScenario s;
    s.model = parse_market(g, "game");
    s.rounds = doc.contains("rounds") ? as_units(doc["rounds"], "rounds") : 10;
    s.seed = static_cast<std::uint64_t>(seed);
    for (auto& i : validate(s)) issues.push_back({i.path == "rounds" ? i.path : "game." + i.path, i.message});
    f.game = s;
  }

  f.agents = as_list(need(doc, "agents", ""), "agents", parse_agent);
  for (const auto& a : f.agents)
    for (auto& i : validate(a)) issues.push_back(i);
  const std::size_t players = f.is_beer() ? static_cast<std::size_t>(std::get<BeerScenario>(f.game).num_stages)
                                          : num_firms(std::get<MarketScenario>(f.game));
  if (f.agents.size() != players)
    issues.push_back({"agents", "expected " + std::to_string(players) + " agents, got " + std::to_string(f.agents.size())});
  for (std::size_t i = 0; i < f.agents.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (f.agents[i].id == f.agents[j].id) issues.push_back({"agents[" + std::to_string(i) + "].id", "duplicate agent id"});
  for (std::size_t i = 0; i < f.agents.size(); ++i) {
    const auto* scripted = std::get_if<ScriptedAgent>(&f.agents[i].kind);
    if (!scripted) continue;
    const bool inventory_policy = std::holds_alternative<BaseStockPolicy>(scripted->policy) ||
                                  std::holds_alternative<TrackingDemandPolicy>(scripted->policy);
    const bool market_policy = std::holds_alternative<NashFixedPolicy>(scripted->policy) ||
                               std::holds_alternative<MyopicBestResponsePolicy>(scripted->policy);
    if (f.is_beer() && market_policy)
      issues.push_back({"agents[" + std::to_string(i) + "].policy", "market policy used in a beer game"});
    if (!f.is_beer() && inventory_policy)
      issues.push_back({"agents[" + std::to_string(i) + "].policy", "inventory policy used in a market game"});
  }

  if (doc.contains("observation")) f.windows = parse_windows(doc["observation"], "observation");
  if (doc.contains("prompt")) {
    expect_keys(doc["prompt"], {"history_window"}, "prompt");
    if (doc["prompt"].contains("history_window")) {
      const Units w = as_units(doc["prompt"]["history_window"], "prompt.history_window");
      if (w < 1) throw ConfigError("prompt.history_window: must be >= 1");
      f.market_history_window = static_cast<std::size_t>(w);
    }
  }
  if (doc.contains("sweep")) {
    if (!f.is_beer()) throw ConfigError("sweep: only beer scenarios support risk/information sweeps");
    const auto& s = doc["sweep"];
    expect_keys(s, {"risk", "info_mode"}, "sweep");
    SweepSpec sweep;
    if (s.contains("risk")) sweep.risks = as_list(s["risk"], "sweep.risk", parse_risk);
    if (s.contains("info_mode")) sweep.info_modes = as_list(s["info_mode"], "sweep.info_mode", parse_info_mode);
    f.sweep = sweep;
  }
  if (doc.contains("client")) f.client = parse_client(doc["client"], "client");
  if (doc.contains("mock")) f.mock = parse_mock(doc["mock"], "mock");

  if (!issues.empty()) throw ValidationError(std::move(issues));
  return f;
}

/// Self-contained description of one episode's engine, enough to rebuild it.
inline json snapshot(const BeerScenario& s) {
  return {{"game",
           {{"type", "beer"},
            {"num_stages", s.num_stages},
            {"horizon", s.horizon},
            {"initial_inventory", s.initial_inventory},
            {"lead_time", s.lead_time},
            {"capacity", s.capacity},
            {"holding_cost", s.holding_cost},
            {"backlog_cost", s.backlog_cost},
            {"demand", io::demand_to_json(s.demand)},
            {"info_mode", to_string(s.info_mode)}}},
          {"seed", s.seed}};
}

inline json snapshot(const MarketScenario& s) {
  json g = std::visit(
      [](const auto& m) -> json {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CournotMarket>)
          return {{"type", "cournot"}, {"a", m.a}, {"b", m.b}, {"costs", m.costs}};
        else if constexpr (std::is_same_v<M, BertrandHomogeneousMarket>)
          return {{"type", "bertrand_homogeneous"}, {"a", m.a}, {"b", m.b}, {"costs", m.costs}, {"tick", m.tick}};
        else
          return {{"type", "bertrand_differentiated"}, {"intercepts", m.intercepts}, {"slopes", m.slopes},
                  {"substitution", m.substitution}, {"costs", m.costs}};
      },
      s.model);
  return {{"game", g}, {"rounds", s.rounds}, {"seed", s.seed}};
}

inline std::variant<BeerScenario, MarketScenario> parse_snapshot(const json& snap) {
  io::expect_keys(snap, {"game", "rounds", "seed"}, "scenario");
  const json& g = io::need(snap, "game", "scenario");
  const auto seed = static_cast<std::uint64_t>(io::as_units(io::need(snap, "seed", "scenario"), "scenario.seed"));
  if (io::as_string(io::need(g, "type", "scenario.game"), "scenario.game.type") == "beer") {
    BeerScenario s = io::parse_beer(g, "scenario.game");
    s.seed = seed;
    return s;
  }
  MarketScenario s;
  s.model = io::parse_market(g, "scenario.game");
  s.rounds = io::as_units(io::need(snap, "rounds", "scenario"), "scenario.rounds");
  s.seed = seed;
  return s;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  return doc;
}

inline ScenarioFile load_scenario(const std::filesystem::path& path) { return parse_scenario(read_json_file(path)); }

}  // namespace scmlab
