#pragma once

// Scripted baseline players. Every output is a non-negative integer.

#include <optional>
#include <variant>

#include "scmlab/beer_game.hpp"
#include "scmlab/market_games.hpp"

namespace scmlab {

struct BaseStockPolicy {
  std::optional<Units> target;  // defaults to the stage capacity
};
struct TrackingDemandPolicy {
  Units window = 3;  // L_max
};
struct NashFixedPolicy {};
struct MyopicBestResponsePolicy {};
struct RandomUniformPolicy {
  Units lo = 0;
  Units hi = 0;
};

using PolicyConfig = std::variant<BaseStockPolicy, TrackingDemandPolicy, NashFixedPolicy,
                                  MyopicBestResponsePolicy, RandomUniformPolicy>;

inline const char* policy_name(const PolicyConfig& p) {
  switch (p.index()) {
    case 0: return "base_stock";
    case 1: return "tracking_demand";
    case 2: return "nash_fixed";
    case 3: return "myopic_best_response";
    default: return "random_uniform";
  }
}

class PolicyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Inventory policies

inline Units order_up_to(Units target, Units inventory_position) {
  return std::max<Units>(0, target - inventory_position);
}

/// Order up to a constant target, the stage capacity unless overridden.
inline Units base_stock_order(const Observation& obs, Units capacity,
                              std::optional<Units> target = std::nullopt) {
  return order_up_to(target.value_or(capacity), obs.inventory_position());
}

/// Mean of the last `window` sales with missing periods counted as zero.
inline double mean_recent_sales(std::span<const Units> sales, Units window) {
  double sum = 0.0;
  const auto k = std::min<std::size_t>(sales.size(), static_cast<std::size_t>(window));
  for (std::size_t i = sales.size() - k; i < sales.size(); ++i) sum += static_cast<double>(sales[i]);
  return sum / static_cast<double>(window);
}

inline Units tracking_demand_target(std::span<const Units> sales, Units lead_time, Units window,
                                    Units backlog) {
  if (window < 1) throw PolicyError("tracking-demand window must be >= 1");
  return round_half_up(mean_recent_sales(sales, window) * static_cast<double>(lead_time)) + backlog;
}

/// Order up to recent average sales times lead time, plus current backlog.
inline Units tracking_demand_order(const Observation& obs, Units lead_time, Units window) {
  const Units target = tracking_demand_target(obs.recent_sales, lead_time, window, obs.backlog);
  return order_up_to(target, obs.inventory_position());
}

// ---------------------------------------------------------------------------
// Market policies

inline Units cournot_best_response(double a, double b, double own_cost,
                                   std::span<const double> opponent_quantities) {
  if (!(b > 0.0)) throw PolicyError("b must be > 0");
  double others = 0.0;
  for (double q : opponent_quantities) others += q;
  return round_half_up(std::max(0.0, (a - own_cost - b * others) / (2.0 * b)));
}

/// Undercut the cheapest rival by one tick while that stays above cost;
/// never exceed the monopoly price.
inline Units bertrand_homogeneous_best_response(const BertrandHomogeneousMarket& m, std::size_t firm,
                                                std::span<const double> opponent_prices) {
  const double cost = m.costs[firm];
  const double monopoly = (m.a + m.b * cost) / (2.0 * m.b);
  double rival_min = std::numeric_limits<double>::infinity();
  for (double p : opponent_prices) rival_min = std::min(rival_min, p);
  double price = monopoly;
  if (rival_min <= monopoly) price = rival_min - m.tick > cost ? rival_min - m.tick : cost;
  return std::max<Units>(0, round_half_up(price));
}

inline Units bertrand_differentiated_best_response(const BertrandDifferentiatedMarket& m,
                                                   std::size_t firm,
                                                   std::span<const double> all_prices) {
  double num = m.intercepts[firm] + m.slopes[firm] * m.costs[firm];
  for (std::size_t j = 0; j < all_prices.size(); ++j)
    if (j != firm) num += m.substitution[firm][j] * all_prices[j];
  return std::max<Units>(0, round_half_up(num / (2.0 * m.slopes[firm])));
}

/// Best response to the previous round's actions; first round plays the
/// response to zero opponent output (Cournot) or to rivals at their own cost.
inline Units myopic_best_response(const MarketScenario& s, std::size_t firm,
                                  const std::vector<Units>* last_actions) {
  const std::size_t n = num_firms(s);
  std::vector<double> previous(n, 0.0);
  if (last_actions) {
    for (std::size_t i = 0; i < n; ++i) previous[i] = static_cast<double>((*last_actions)[i]);
  } else if (s.model.index() != 0) {
    previous = firm_costs(s);
  }
  std::vector<double> opponents;
  for (std::size_t i = 0; i < n; ++i)
    if (i != firm) opponents.push_back(previous[i]);

  return std::visit(
      [&](const auto& m) -> Units {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CournotMarket>)
          return cournot_best_response(m.a, m.b, m.costs[firm], opponents);
        else if constexpr (std::is_same_v<M, BertrandHomogeneousMarket>)
          return bertrand_homogeneous_best_response(m, firm, opponents);
        else return bertrand_differentiated_best_response(m, firm, previous);
      },
      s.model);
}

/// Plays the oracle action every round, rounded onto the integer grid. For
/// homogeneous Bertrand the tick-feasible price is used.
inline Units nash_fixed_action(const EquilibriumSolution& eq, std::size_t firm) {
  const auto& actions = eq.tick_feasible_actions ? *eq.tick_feasible_actions : eq.actions;
  if (firm >= actions.size()) throw PolicyError("firm index outside the equilibrium solution");
  return std::max<Units>(0, round_half_up(actions[firm]));
}

inline Units random_uniform_action(const RandomUniformPolicy& p, Rng& rng) {
  if (p.lo > p.hi) throw PolicyError("random policy requires lo <= hi");
  return std::uniform_int_distribution<Units>(p.lo, p.hi)(rng);
}

}  // namespace scmlab
