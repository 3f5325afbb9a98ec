#pragma once

// Horizontal competition: Cournot quantity games and Bertrand price games
// (homogeneous goods with heterogeneous costs, and differentiated goods),
// with analytic Nash-equilibrium oracles.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "scmlab/core.hpp"

namespace scmlab {

class MarketError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NoEquilibriumError : public MarketError {
public:
  using MarketError::MarketError;
};

struct Clearing {
  std::optional<double> price;  // Cournot only
  std::vector<double> sales;
  std::vector<double> profits;
};

namespace detail {
inline void check_arity(std::size_t got, std::size_t firms) {
  if (got != firms)
    throw MarketError("expected " + std::to_string(firms) + " actions, got " + std::to_string(got));
}
}  // namespace detail

inline Clearing cournot_clear(const CournotMarket& m, std::span<const double> quantities) {
  detail::check_arity(quantities.size(), m.costs.size());
  double total = 0.0;
  for (double q : quantities) total += q;
  const double price = std::max(0.0, m.a - m.b * total);
  Clearing c;
  c.price = price;
  c.sales.assign(quantities.begin(), quantities.end());
  for (std::size_t i = 0; i < quantities.size(); ++i)
    c.profits.push_back((price - m.costs[i]) * quantities[i]);
  return c;
}

inline double homogeneous_demand(const BertrandHomogeneousMarket& m, double price) {
  return std::max(0.0, m.a - m.b * price);
}

/// Lowest price takes the whole market; ties split it equally.
inline Clearing bertrand_homogeneous_clear(const BertrandHomogeneousMarket& m,
                                           std::span<const double> prices) {
  detail::check_arity(prices.size(), m.costs.size());
  Clearing c;
  c.sales.assign(prices.size(), 0.0);
  c.profits.assign(prices.size(), 0.0);
  if (prices.empty()) return c;
  const double p_min = *std::min_element(prices.begin(), prices.end());
  const auto winners = static_cast<double>(std::count(prices.begin(), prices.end(), p_min));
  const double demand = homogeneous_demand(m, p_min);
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (prices[i] == p_min) c.sales[i] = demand / winners;
    c.profits[i] = (prices[i] - m.costs[i]) * c.sales[i];
  }
  return c;
}

inline Clearing bertrand_differentiated_clear(const BertrandDifferentiatedMarket& m,
                                              std::span<const double> prices) {
  const std::size_t n = m.costs.size();
  detail::check_arity(prices.size(), n);
  Clearing c;
  for (std::size_t i = 0; i < n; ++i) {
    double q = m.intercepts[i] - m.slopes[i] * prices[i];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) q += m.substitution[i][j] * prices[j];
    q = std::max(0.0, q);
    c.sales.push_back(q);
    c.profits.push_back((prices[i] - m.costs[i]) * q);
  }
  return c;
}

inline Clearing clear_market(const MarketScenario& s, std::span<const double> actions) {
  return std::visit(
      [&](const auto& m) -> Clearing {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CournotMarket>) return cournot_clear(m, actions);
        else if constexpr (std::is_same_v<M, BertrandHomogeneousMarket>)
          return bertrand_homogeneous_clear(m, actions);
        else return bertrand_differentiated_clear(m, actions);
      },
      s.model);
}

// ---------------------------------------------------------------------------
// Equilibrium oracles

enum class ActionKind { quantity, price };

struct EquilibriumSolution {
  ActionKind kind = ActionKind::quantity;
  std::vector<double> actions;     // q*_i (Cournot) or p*_i (Bertrand)
  std::vector<double> quantities;  // equilibrium quantity per firm
  std::optional<double> aggregate_quantity;
  std::optional<double> market_price;
  // Homogeneous Bertrand: the best price on the tick grid, and its sales.
  std::optional<std::vector<double>> tick_feasible_actions;
  std::optional<std::vector<double>> tick_feasible_quantities;
};

/// Solves the stacked first-order conditions, fixing firms with non-positive
/// output at zero and re-solving until every active firm produces.
inline EquilibriumSolution cournot_equilibrium(const CournotMarket& m) {
  if (!(m.b > 0.0)) throw NoEquilibriumError("Cournot system is singular (b <= 0)");
  const std::size_t n = m.costs.size();
  if (n == 0) throw MarketError("no firms");
  std::vector<bool> active(n, true);
  std::vector<double> q(n, 0.0);

  while (true) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) idx.push_back(i);
    if (idx.empty()) break;
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Constant(k, k, m.b);
    A.diagonal().setConstant(2.0 * m.b);
    Eigen::VectorXd d(k);
    for (Eigen::Index r = 0; r < k; ++r) d[r] = m.a - m.costs[idx[static_cast<std::size_t>(r)]];
    const Eigen::VectorXd sol = A.partialPivLu().solve(d);

    // Drop the least efficient firm among those priced out, then re-solve.
    std::optional<std::size_t> drop;
    for (Eigen::Index r = 0; r < k; ++r) {
      const std::size_t i = idx[static_cast<std::size_t>(r)];
      if (sol[r] <= 0.0 && (!drop || m.costs[i] > m.costs[*drop])) drop = i;
    }
    if (!drop) {
      std::fill(q.begin(), q.end(), 0.0);
      for (Eigen::Index r = 0; r < k; ++r) q[idx[static_cast<std::size_t>(r)]] = sol[r];
      break;
    }
    active[*drop] = false;
  }

  EquilibriumSolution s;
  s.kind = ActionKind::quantity;
  s.actions = q;
  s.quantities = q;
  double total = 0.0;
  for (double v : q) total += v;
  s.aggregate_quantity = total;
  s.market_price = m.a - m.b * total;
  return s;
}

/// The lowest-cost firm prices at the second-lowest cost (the limit of
/// c2 - eps) and serves all demand; others price at cost and sell nothing.
/// When k firms share the lowest cost they price at it and split demand.
inline EquilibriumSolution bertrand_homogeneous_equilibrium(const BertrandHomogeneousMarket& m) {
  const std::size_t n = m.costs.size();
  if (n < 2) throw MarketError("homogeneous Bertrand equilibrium needs at least two firms");
  const double c1 = *std::min_element(m.costs.begin(), m.costs.end());
  const auto k = static_cast<std::size_t>(std::count(m.costs.begin(), m.costs.end(), c1));

  EquilibriumSolution s;
  s.kind = ActionKind::price;
  s.actions = m.costs;
  s.quantities.assign(n, 0.0);
  std::vector<double> tick_actions = m.costs;
  std::vector<double> tick_quantities(n, 0.0);

  if (k > 1) {
    const double share = homogeneous_demand(m, c1) / static_cast<double>(k);
    for (std::size_t i = 0; i < n; ++i)
      if (m.costs[i] == c1) s.quantities[i] = tick_quantities[i] = share;
    s.market_price = c1;
  } else {
    double c2 = std::numeric_limits<double>::infinity();
    for (double c : m.costs)
      if (c > c1) c2 = std::min(c2, c);
    const auto winner = static_cast<std::size_t>(
        std::min_element(m.costs.begin(), m.costs.end()) - m.costs.begin());
    s.actions[winner] = c2;
    s.quantities[winner] = homogeneous_demand(m, c2);
    s.market_price = c2;
    // One tick below the rival's cost; never below the winner's own cost.
    const double tick_price = std::max(c1, c2 - m.tick);
    tick_actions[winner] = tick_price;
    tick_quantities[winner] = homogeneous_demand(m, tick_price);
  }
  s.tick_feasible_actions = std::move(tick_actions);
  s.tick_feasible_quantities = std::move(tick_quantities);
  return s;
}

/// Solves 2 B_i p_i - sum_j d_ij p_j = A_i + B_i c_i. Requires 2 B_i to
/// exceed the row's substitution sum, the general form of 2B > C(n-1).
inline EquilibriumSolution bertrand_differentiated_equilibrium(const BertrandDifferentiatedMarket& m) {
  const std::size_t n = m.costs.size();
  if (n == 0) throw MarketError("no firms");
  const auto k = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd M(k, k);
  Eigen::VectorXd rhs(k);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -m.substitution[i][j];
      off += m.substitution[i][j];
    }
    const double diag = 2.0 * m.slopes[i];
    if (!(diag > off))
      throw NoEquilibriumError("no stable equilibrium: 2B_" + std::to_string(i + 1) +
                               " does not exceed the substitution sum");
    M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag;
    rhs[static_cast<Eigen::Index>(i)] = m.intercepts[i] + m.slopes[i] * m.costs[i];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) throw NoEquilibriumError("first-order condition system is singular");
  const Eigen::VectorXd p = lu.solve(rhs);

  EquilibriumSolution s;
  s.kind = ActionKind::price;
  s.actions.assign(p.data(), p.data() + p.size());
  s.quantities = bertrand_differentiated_clear(m, s.actions).sales;
  return s;
}

struct SymmetricDifferentiated {
  double price = 0.0;
  double quantity = 0.0;
};

/// Closed form for n identical firms with common substitution coefficient C.
inline SymmetricDifferentiated symmetric_differentiated_closed_form(double A, double B, double C,
                                                                    double cost, std::size_t n) {
  const double denom = 2.0 * B - C * static_cast<double>(n - 1);
  if (!(denom > 0.0)) throw NoEquilibriumError("no equilibrium: 2B <= C(n-1)");
  const double p = (A + B * cost) / denom;
  return {p, A + (C * static_cast<double>(n - 1) - B) * p};
}

inline EquilibriumSolution equilibrium(const MarketScenario& s) {
  return std::visit(
      [](const auto& m) -> EquilibriumSolution {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CournotMarket>) return cournot_equilibrium(m);
        else if constexpr (std::is_same_v<M, BertrandHomogeneousMarket>)
          return bertrand_homogeneous_equilibrium(m);
        else return bertrand_differentiated_equilibrium(m);
      },
      s.model);
}

// ---------------------------------------------------------------------------
// Repeated-game state

struct MarketRound {
  std::vector<Units> actions;
  Clearing clearing;
};

struct MarketState {
  MarketScenario scenario;
  std::vector<MarketRound> rounds;
  std::vector<double> cumulative_profit;

  std::size_t rounds_played() const { return rounds.size(); }
  bool finished() const { return static_cast<Units>(rounds.size()) >= scenario.rounds; }
};

inline MarketState init(const MarketScenario& s) {
  require_valid(s);
  MarketState state;
  state.scenario = s;
  state.cumulative_profit.assign(num_firms(s), 0.0);
  return state;
}

/// Applies one round of simultaneous integer actions.
inline const MarketRound& play_round(MarketState& state, std::span<const Units> actions) {
  if (state.finished()) throw MarketError("market game already finished");
  for (Units a : actions)
    if (a < 0) throw MarketError("actions must be non-negative");
  std::vector<double> real(actions.begin(), actions.end());
  MarketRound round{std::vector<Units>(actions.begin(), actions.end()), clear_market(state.scenario, real)};
  for (std::size_t i = 0; i < round.clearing.profits.size(); ++i)
    state.cumulative_profit[i] += round.clearing.profits[i];
  state.rounds.push_back(std::move(round));
  return state.rounds.back();
}

inline double total_cumulative_profit(const MarketState& state) {
  double total = 0.0;
  for (double p : state.cumulative_profit) total += p;
  return total;
}

}  // namespace scmlab
