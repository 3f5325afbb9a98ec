#pragma once

// Serial multi-echelon beer distribution game. Stage 0 is the retailer,
// stage N-1 the manufacturer. Each period runs four phases in order:
// arrivals, incoming orders, fulfillment, ordering.

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scmlab/core.hpp"

namespace scmlab {

class EngineError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct PipelineEntry {
  Units arrival_period = 0;
  Units quantity = 0;
};

struct StageState {
  Units on_hand = 0;
  Units backlog = 0;  // owed to the downstream stage (or to customers)
  std::vector<PipelineEntry> inbound;
  // Topmost stage only: ordered from raw-material supply, not yet released.
  Units production_queue = 0;

  std::vector<Units> order_history;
  std::vector<Units> sales_history;
  std::vector<Units> received_order_history;
  std::vector<Units> arrival_history;
  std::vector<Units> net_inventory_history;
  std::vector<double> reward_history;

  Units net_inventory() const { return on_hand - backlog; }

  Units pipeline_total() const {
    Units total = 0;
    for (const auto& e : inbound) total += e.quantity;
    return total;
  }
};

struct BeerGameState {
  BeerScenario scenario;
  Units period = 0;
  std::vector<StageState> stages;
  std::vector<Units> demand_history;
  std::vector<double> chain_cost_history;
  double cumulative_chain_cost = 0.0;
  Rng demand_rng;

  bool finished() const { return period >= scenario.horizon; }
  std::size_t num_stages() const { return stages.size(); }
};

/// Everything that happened during one period, for logging and checking.
struct StepOutcome {
  Units period = 0;
  Units demand = 0;
  std::vector<Units> orders;
  std::vector<Units> arrivals;
  std::vector<Units> received_orders;
  std::vector<Units> shipments;
  Units production_release = 0;
  std::vector<double> rewards;
  double chain_cost = 0.0;
};

inline double stage_period_cost(Units net_inventory, double holding, double backlog) {
  return holding * static_cast<double>(std::max<Units>(net_inventory, 0)) -
         backlog * static_cast<double>(std::min<Units>(net_inventory, 0));
}

inline BeerGameState init(const BeerScenario& scenario) {
  require_valid(scenario);
  BeerGameState state;
  state.scenario = scenario;
  state.stages.resize(static_cast<std::size_t>(scenario.num_stages));
  for (std::size_t i = 0; i < state.stages.size(); ++i)
    state.stages[i].on_hand = scenario.initial_inventory[i];
  state.demand_rng = split_stream(scenario.seed, Stream::demand);
  return state;
}

/// Advances the state by one period in place.
inline StepOutcome advance(BeerGameState& state, std::span<const Units> orders) {
  if (state.finished()) throw EngineError("episode already finished");
  const std::size_t n = state.stages.size();
  if (orders.size() != n)
    throw EngineError("expected " + std::to_string(n) + " orders, got " + std::to_string(orders.size()));
  for (std::size_t i = 0; i < n; ++i)
    if (orders[i] < 0) throw EngineError("stage " + std::to_string(i) + " placed a negative order");

  const auto& sc = state.scenario;
  const Units t = state.period;
  StepOutcome out;
  out.period = t;
  out.orders.assign(orders.begin(), orders.end());
  out.arrivals.assign(n, 0);
  out.received_orders.assign(n, 0);
  out.shipments.assign(n, 0);
  out.rewards.assign(n, 0.0);

  // (1) arrivals
  for (std::size_t i = 0; i < n; ++i) {
    auto& st = state.stages[i];
    Units arrived = 0;
    std::erase_if(st.inbound, [&](const PipelineEntry& e) {
      if (e.arrival_period != t) return false;
      arrived += e.quantity;
      return true;
    });
    st.on_hand += arrived;
    st.arrival_history.push_back(arrived);
    out.arrivals[i] = arrived;
  }

  // (2) incoming orders; order information travels without delay
  out.demand = sample_demand(sc.demand, t, state.demand_rng);
  state.demand_history.push_back(out.demand);
  out.received_orders[0] = out.demand;
  for (std::size_t i = 1; i < n; ++i) out.received_orders[i] = orders[i - 1];

  // (3) fulfillment, backlog first, capped by outbound capacity
  for (std::size_t i = 0; i < n; ++i) {
    auto& st = state.stages[i];
    const Units owed = st.backlog + out.received_orders[i];
    const Units shipped = std::min({st.on_hand, owed, sc.capacity[i]});
    st.on_hand -= shipped;
    st.backlog = owed - shipped;
    st.sales_history.push_back(shipped);
    st.received_order_history.push_back(out.received_orders[i]);
    out.shipments[i] = shipped;
    if (i > 0 && shipped > 0)
      state.stages[i - 1].inbound.push_back({t + sc.lead_time[i - 1], shipped});
  }

  // (4) orders; the topmost stage releases production from its queue
  for (std::size_t i = 0; i < n; ++i) state.stages[i].order_history.push_back(orders[i]);
  {
    auto& top = state.stages[n - 1];
    top.production_queue += orders[n - 1];
    const Units release = std::min(top.production_queue, sc.capacity[n - 1]);
    top.production_queue -= release;
    if (release > 0) top.inbound.push_back({t + sc.lead_time[n - 1], release});
    out.production_release = release;
  }

  // costs on post-fulfillment net inventory
  double period_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& st = state.stages[i];
    const Units net = st.net_inventory();
    const double cost = stage_period_cost(net, sc.holding_cost[i], sc.backlog_cost[i]);
    st.net_inventory_history.push_back(net);
    st.reward_history.push_back(-cost);
    out.rewards[i] = -cost;
    period_cost += cost;
  }
  out.chain_cost = period_cost;
  state.chain_cost_history.push_back(period_cost);
  state.cumulative_chain_cost += period_cost;
  ++state.period;
  return out;
}

/// Value-semantics step: returns the successor state, per-stage rewards and
/// the period chain cost.
struct StepResult {
  BeerGameState state;
  std::vector<double> rewards;
  double chain_cost = 0.0;
  StepOutcome outcome;
};

inline StepResult step(BeerGameState state, std::span<const Units> orders) {
  StepOutcome outcome = advance(state, orders);
  std::vector<double> rewards = outcome.rewards;
  const double cost = outcome.chain_cost;
  return {std::move(state), std::move(rewards), cost, std::move(outcome)};
}

/// C(T) recomputed from the recorded net inventories.
inline double chain_cost(const BeerGameState& state) {
  const auto& sc = state.scenario;
  double total = 0.0;
  for (Units t = 0; t < state.period; ++t) {
    double period_cost = 0.0;
    for (std::size_t i = 0; i < state.stages.size(); ++i)
      period_cost += stage_period_cost(state.stages[i].net_inventory_history[static_cast<std::size_t>(t)],
                                       sc.holding_cost[i], sc.backlog_cost[i]);
    total += period_cost;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Observations

struct ObservationWindows {
  std::size_t sales = 3;
  std::size_t received_orders = 6;
  std::size_t rewards = 6;
  std::size_t demands = 6;
  // The isolated-information transcript still shows the upstream backlog line.
  bool upstream_backlog_when_isolated = true;
};

struct UpstreamInfo {
  Units lead_time = 0;
  Units on_hand = 0;
  Units backlog = 0;
};

struct Observation {
  std::size_t stage_index = 0;
  std::size_t num_stages = 0;
  Units period = 0;
  Units horizon = 0;
  Units lead_time = 0;
  Units capacity = 0;
  Units on_hand = 0;
  Units backlog = 0;
  std::optional<Units> upstream_backlog;
  std::vector<Units> recent_sales;
  std::vector<Units> arriving_deliveries;  // index k arrives k periods from now
  // Ordered but not yet shipped: the upstream stage's backlog, or the
  // production queue at the top of the chain.
  Units outstanding_order = 0;
  std::vector<Units> received_orders;
  std::optional<Units> received_order_now;
  std::optional<std::vector<Units>> demand_history;
  std::optional<std::pair<Units, Units>> demand_range_hint;
  std::optional<NormalRoundedDemand> demand_normal_hint;
  std::vector<double> reward_history;
  std::optional<UpstreamInfo> upstream_info;

  bool is_retailer() const { return stage_index == 0; }
  bool is_topmost() const { return stage_index + 1 == num_stages; }

  Units pipeline_total() const {
    Units total = 0;
    for (Units q : arriving_deliveries) total += q;
    return total;
  }

  /// On hand, minus what is owed downstream, plus everything on order.
  Units inventory_position() const { return on_hand - backlog + pipeline_total() + outstanding_order; }
};

template <typename T>
std::vector<T> last_n(const std::vector<T>& v, std::size_t n) {
  const std::size_t k = std::min(n, v.size());
  return std::vector<T>(v.end() - static_cast<std::ptrdiff_t>(k), v.end());
}

/// Builds what a stage sees before deciding. `received_order_now` is the
/// order its downstream placed earlier in the same period, if any.
inline Observation observe(const BeerGameState& state, std::size_t stage, InfoMode info_mode,
                           const ObservationWindows& windows = {},
                           std::optional<Units> received_order_now = std::nullopt) {
  if (stage >= state.stages.size()) throw EngineError("stage index out of range");
  const auto& sc = state.scenario;
  const auto& st = state.stages[stage];
  const bool topmost = stage + 1 == state.stages.size();

  Observation obs;
  obs.stage_index = stage;
  obs.num_stages = state.stages.size();
  obs.period = state.period;
  obs.horizon = sc.horizon;
  obs.lead_time = sc.lead_time[stage];
  obs.capacity = sc.capacity[stage];
  obs.on_hand = st.on_hand;
  obs.backlog = st.backlog;

  obs.outstanding_order = topmost ? st.production_queue : state.stages[stage + 1].backlog;
  if (info_mode == InfoMode::sharing || windows.upstream_backlog_when_isolated)
    obs.upstream_backlog = obs.outstanding_order;

  obs.recent_sales = last_n(st.sales_history, windows.sales);
  obs.arriving_deliveries.assign(static_cast<std::size_t>(obs.lead_time), 0);
  for (const auto& e : st.inbound) {
    const Units ahead = e.arrival_period - state.period;
    if (ahead >= 0 && ahead < obs.lead_time) obs.arriving_deliveries[static_cast<std::size_t>(ahead)] += e.quantity;
  }
  obs.received_orders = last_n(st.received_order_history, windows.received_orders);
  if (stage > 0) obs.received_order_now = received_order_now;
  obs.reward_history = last_n(st.reward_history, windows.rewards);

  if (stage == 0) {
    obs.demand_history = last_n(state.demand_history, windows.demands);
    if (const auto* normal = std::get_if<NormalRoundedDemand>(&sc.demand))
      obs.demand_normal_hint = *normal;
    else
      obs.demand_range_hint = demand_bounds(sc.demand);
  }

  if (info_mode == InfoMode::sharing && !topmost) {
    const auto& up = state.stages[stage + 1];
    obs.upstream_info = UpstreamInfo{sc.lead_time[stage + 1], up.on_hand, up.backlog};
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Episode log: one JSON object per period.

inline nlohmann::json period_log_entry(const BeerGameState& after, const StepOutcome& out) {
  nlohmann::json on_hand = nlohmann::json::array();
  nlohmann::json backlogs = nlohmann::json::array();
  for (const auto& st : after.stages) {
    on_hand.push_back(st.on_hand);
    backlogs.push_back(st.backlog);
  }
  return {
      {"period", out.period},
      {"demands", {out.demand}},
      {"orders", out.orders},
      {"arrivals", out.arrivals},
      {"received_orders", out.received_orders},
      {"shipments", out.shipments},
      {"production_release", out.production_release},
      {"on_hand", on_hand},
      {"backlogs", backlogs},
      {"rewards", out.rewards},
      {"chain_cost", out.chain_cost},
  };
}

inline std::string stage_role(std::size_t stage, std::size_t num_stages) {
  if (stage == 0) return "retailer";
  if (stage + 1 == num_stages) return "manufacturer";
  if (num_stages == 4) return stage == 1 ? "wholesaler" : "distributor";
  return "intermediary";
}

}  // namespace scmlab
