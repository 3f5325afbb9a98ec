#pragma once

// Message templates for market and beer-game agents, placeholder rendering,
// and the per-round outcome boxes.

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "scmlab/beer_game.hpp"
#include "scmlab/format.hpp"
#include "scmlab/market_games.hpp"

namespace scmlab {

class PromptError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using Placeholders = std::map<std::string, std::string>;

struct PromptBundle {
  std::string system_message;
  std::string process_message;
  Placeholders placeholders_resolved;
};

namespace templates {

inline constexpr std::string_view cournot_system =
    R"(You are a rational firm competing in a market with {{num_firms}} firms. You are {{firm_name}} (Firm {{firm_number}}). Your goal is to maximize profit by deciding quantity.

Market mechanism:
- Each round you and other firms simultaneously decide your quantities
- Market price is determined by the inverse demand function: $P = a - bQ$, where $Q$ is the total quantity of all firms
- Your profit equals: Profit = $(P - c) \times q$, where $c$ is your marginal cost, $q$ is your quantity
- Other firms are also trying to maximize their profits
- Each round you can only observe the previous market results, you cannot know other firms' decisions in advance

As a rational entrepreneur, you need to:
- Gradually optimize your strategy by observing market reactions
- Consider the demand function, your costs, and possible behaviors of other firms
- Analyze trends based on historical observations and make the best decision)";

inline constexpr std::string_view cournot_process =
    R"(It's round {{round}}, you are firm {{firm_number}} in this market.

Your current state:
{{state_description}}

Market information:
{{model_description}}

You need to decide how many units to produce this round. Consider:
1. The market demand function: $P = a - bQ$
2. Your marginal cost
3. How your quantity affects market price
4. How to set quantity to maximize profit: $(P - \text{marginal cost}) \times \text{quantity}$

Please analyze the market situation, then provide your quantity decision.

Start by explaining your reasoning in one or two sentences, then give an integer quantity in square brackets (e.g. [26]).)";

inline constexpr std::string_view bertrand_system =
    R"(You are a rational firm competing in a market with {{num_firms}} firms. You are {{firm_name}} (Firm {{firm_number}}). Your goal is to maximize profit by deciding price.

Market mechanism:
- Each round you and other firms simultaneously decide your prices
- Your demand function: $q = a - bP + \sum dP'$, where $P'$ are other firms' prices
- Parameter $a$ is your potential market size, $b$ is your price elasticity, $d$ is product substitution coefficient
- When $d > 0$, rising prices by other firms will increase demand for your product (positive substitution effect)
- Your profit equals: Profit $= (P - c) \times q$, where $P$ is your price, $c$ is your marginal cost, $q$ is your sales volume
- Other firms are also trying to maximize their profits
- Each round you can only observe the previous market results, you cannot know other firms' decisions in advance

As a rational entrepreneur, you need to:
- Gradually optimize your pricing strategy by observing market reactions
- Consider the demand function, product substitutability, your costs, and possible behaviors of other firms
- Analyze historical price and sales data to find the optimal price
- Think about how price changes affect demand and profit
- Remember not to set price below your marginal cost, otherwise you will incur a loss)";

inline constexpr std::string_view bertrand_process =
    R"(It's round {{round}}, you are firm {{firm_number}} in this market.

Your current state:
{{state_description}}

Market information:
{{model_description}}

You need to decide the price for your product this round. Consider:
1. Your demand function: $q = a - bP + \sum dP'$, where $P'$ are other firms' prices
2. Your marginal cost: {{marginal_cost}} units/price
3. The effect of price on demand volume
4. Substitution coefficients indicate how other firms' price changes affect your demand
5. How to set price to maximize profit: (price - marginal cost) $\times$ sales volume

Please analyze the market situation, then provide your price decision.

Start by explaining your reasoning in one or two sentences, then give an integer price in square brackets (e.g. [45]).)";

inline constexpr std::string_view risk_averse =
    "You are highly risk-averse and prioritize avoiding stockouts at all costs. You should maintain "
    "higher inventory levels to ensure you can always meet demand. It's better to have excess "
    "inventory than to risk backlog. You should place larger orders earlier to provide a safety "
    "buffer.";

inline constexpr std::string_view risk_appetite =
    "You are profit-oriented, and your first goal is to obtain the highest reward. You should keep "
    "inventory levels low and place orders in a timely manner. If the loss caused by backlogs "
    "affects your reward, you should replenish the stock in time. You should place orders more "
    "frequently and adjust your ordering strategy in time to ensure higher rewards.";

inline constexpr std::string_view risk_neutral =
    "You should balance inventory holding costs with the risk of stockouts. Aim to maintain a "
    "moderate inventory level that can handle normal demand fluctuations. Try to balance the costs "
    "of backlog with the costs of holding excess inventory.";

inline constexpr std::string_view information_sharing =
    "As part of our information sharing system, you will receive data about upstream stages' Lead "
    "Time, Inventory Level, and Current Backlog. Use this information to better anticipate supply "
    "chain issues and optimize your ordering decisions.";

inline constexpr std::string_view beer_process =
    R"(Now this is round {{round}} of {{horizon}}, and you are at stage {{stage_number}} ({{role}}) of {{num_stages}} in the supply chain.

Your current state:
{{state_description}}

{{guidelines}})";

inline constexpr std::string_view manufacturer_guidelines =
    R"(Guidelines for your decision:
1. Consider your current inventory, backlog, and expected future orders.
2. Account for lead time – you need to place orders in advance.
3. Analyze patterns in your downstream's ordering history to forecast future demand.
4. Try to avoid both stockouts and excess inventory.
5. Open orders should always equal to "expected downstream orders + backlog." If open orders are larger than this, the inventory will rise (once the open orders arrive). If open orders are smaller than this, the backlog will not go down and it may even rise.
Please first explain your reasoning in 1-2 sentences based on the downstream order pattern you observe and your historical performance, then provide your order quantity as a non-negative integer within brackets (e.g. [5]).)";

inline constexpr std::string_view downstream_guidelines =
    R"(Guidelines for your decision:
1. Consider your current inventory, backlog, and expected future orders.
2. Account for lead time – you need to place orders in advance.
3. Analyze patterns in your downstream's ordering history to forecast future demand.
4. Review the information about upstream stages to anticipate potential supply issues.
5. Try to avoid both stockouts and excess inventory.
6. Open orders should always equal to "expected downstream orders + backlog." If open orders are larger than this, the inventory will rise (once the open orders arrive). If open orders are smaller than this, the backlog will not go down and it may even rise.
Please first explain your reasoning in 1-2 sentences based on the downstream order pattern you observe, the upstream supply chain information, and your historical performance, then provide your order quantity as a non-negative integer within brackets (e.g. [5]).)";

inline constexpr std::string_view corrective_instruction =
    "Your previous reply did not contain a valid decision. Reply again and end with a single "
    "non-negative integer in square brackets (e.g. [5]).";

}  // namespace templates

/// Substitutes every {{name}}. Unknown or empty placeholders are errors.
inline std::string render_template(std::string_view tmpl, const Placeholders& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw PromptError("unterminated placeholder in template");
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    const auto it = values.find(name);
    if (it == values.end() || it->second.empty())
      throw PromptError("unresolved placeholder: " + name);
    out += it->second;
    pos = close + 2;
  }
  return out;
}

inline std::string_view risk_preamble(RiskPreference r) {
  switch (r) {
    case RiskPreference::averse: return templates::risk_averse;
    case RiskPreference::neutral: return templates::risk_neutral;
    case RiskPreference::appetite: return templates::risk_appetite;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Market prompts

struct MarketPromptOptions {
  std::vector<std::string> firm_names;  // defaults to Firm_<k>
  std::size_t history_window = 5;
};

namespace detail {

inline std::string default_firm_name(std::size_t firm) { return "Firm_" + std::to_string(firm + 1); }

inline std::string market_description(const MarketScenario& s) {
  const std::string n = std::to_string(num_firms(s));
  return std::visit(
      [&](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CournotMarket>)
          return "Cournot quantity competition among " + n +
                 " firms selling a homogeneous product. Market capacity: " + fmt::real(m.a / m.b) +
                 " units.";
        else if constexpr (std::is_same_v<M, BertrandHomogeneousMarket>)
          return "Bertrand price competition among " + n +
                 " firms selling a homogeneous product. The lowest price captures the whole market "
                 "and equal lowest prices split it. Market size: " + fmt::real(m.a) + " units.";
        else
          return "Bertrand price competition among " + n +
                 " firms selling differentiated products. Your sales rise when other firms raise "
                 "their prices, in proportion to your substitution coefficients.";
      },
      s.model);
}

inline std::string history_lines(const MarketState& state, std::size_t firm, std::size_t window,
                                 bool cournot) {
  if (state.rounds.empty()) return {};
  const auto& last = state.rounds.back();
  const std::size_t k = std::min(window, state.rounds.size());
  std::vector<Units> own;
  std::vector<double> prices, sales;
  for (std::size_t r = state.rounds.size() - k; r < state.rounds.size(); ++r) {
    const auto& round = state.rounds[r];
    own.push_back(round.actions[firm]);
    if (cournot) prices.push_back(*round.clearing.price);
    sales.push_back(round.clearing.sales[firm]);
  }
  std::string out;
  if (cournot) {
    Units total = 0;
    for (Units q : last.actions) total += q;
    out += "\n- Previous round: market price $" + fmt::fixed(*last.clearing.price, 2) +
           "$, total quantity $" + std::to_string(total) + "$, your quantity $" +
           std::to_string(last.actions[firm]) + "$, your profit $" +
           fmt::fixed(last.clearing.profits[firm], 2) + "$";
    out += "\n- Your quantities (from old to new): " + fmt::int_list(own);
    out += "\n- Market prices (from old to new): " + fmt::fixed_list(prices, 2);
  } else {
    const Units lowest = *std::min_element(last.actions.begin(), last.actions.end());
    out += "\n- Previous round: your price $" + std::to_string(last.actions[firm]) +
           "$, your sales $" + fmt::fixed(last.clearing.sales[firm], 2) + "$, your profit $" +
           fmt::fixed(last.clearing.profits[firm], 2) + "$, lowest market price $" +
           std::to_string(lowest) + "$";
    out += "\n- Your prices (from old to new): " + fmt::int_list(own);
    out += "\n- Your sales (from old to new): " + fmt::fixed_list(sales, 2);
  }
  out += "\n- Your cumulative profit: $" + fmt::fixed(state.cumulative_profit[firm], 2) + "$";
  return out;
}

inline std::string market_state_description(const MarketScenario& s, const MarketState& state,
                                             std::size_t firm, std::size_t window) {
  const double cost = firm_costs(s)[firm];
  return std::visit(
      [&](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CournotMarket>) {
          return "- Demand function: $P = " + fmt::real(m.a) + " - " + fmt::real(m.b) +
                 " Q$ (where $Q$ is the total quantity of all firms)\n- Your marginal cost: $" +
                 fmt::real(cost) + "$ units/price" + history_lines(state, firm, window, true);
        } else {
          std::string out;
          if constexpr (std::is_same_v<M, BertrandHomogeneousMarket>) {
            out = "- Demand function parameters: $a = " + fmt::real(m.a) + "$, $b = " + fmt::real(m.b) + "$";
          } else {
            std::vector<double> d;
            for (std::size_t j = 0; j < m.costs.size(); ++j)
              if (j != firm) d.push_back(m.substitution[firm][j]);
            out = "- Demand function parameters: $a = " + fmt::real(m.intercepts[firm]) + "$, $b = " +
                  fmt::real(m.slopes[firm]) + "$, $d = " + fmt::real_list(d) + "$";
          }
          out += "\n- Your marginal cost: $" + fmt::real(cost) + "$ units/price";
          out += "\n- Your demand function: $q = f(\\text{all prices})$ based on market demand and "
                 "product differentiation";
          try {
            const auto eq = equilibrium(s);
            out += "\n- Nash equilibrium price for you: $" + fmt::fixed(eq.actions[firm], 2) + "$";
            out += "\n- Nash equilibrium quantity for you: $" + fmt::fixed(eq.quantities[firm], 2) + "$";
          } catch (const MarketError&) {
          }
          return out + history_lines(state, firm, window, false);
        }
      },
      s.model);
}

}  // namespace detail

/// `round` is 1-based.
inline PromptBundle render_market_prompts(const MarketScenario& s, std::size_t firm, Units round,
                                          const MarketState& state,
                                          const MarketPromptOptions& options = {}) {
  if (round < 1) throw PromptError("round must be >= 1");
  if (firm >= num_firms(s)) throw PromptError("firm index out of range");
  const bool cournot = std::holds_alternative<CournotMarket>(s.model);

  Placeholders p;
  p["num_firms"] = std::to_string(num_firms(s));
  p["firm_name"] = options.firm_names.empty() ? detail::default_firm_name(firm)
                   : firm < options.firm_names.size() ? options.firm_names[firm]
                                                      : std::string{};
  p["firm_number"] = std::to_string(firm + 1);
  p["round"] = std::to_string(round);
  p["state_description"] = detail::market_state_description(s, state, firm, options.history_window);
  p["model_description"] = detail::market_description(s);
  if (!cournot) p["marginal_cost"] = "$" + fmt::real(firm_costs(s)[firm]) + "$";

  PromptBundle b;
  b.system_message = render_template(cournot ? templates::cournot_system : templates::bertrand_system, p);
  b.process_message = render_template(cournot ? templates::cournot_process : templates::bertrand_process, p);
  b.placeholders_resolved = std::move(p);
  return b;
}

/// The per-round market outcome box shown in transcripts. `round` is 1-based.
inline std::string render_market_outcome(const MarketScenario& s, Units round,
                                         std::span<const Units> actions, const Clearing& c,
                                         double cumulative_reward) {
  const bool cournot = std::holds_alternative<CournotMarket>(s.model);
  std::string out = "- Round = " + std::to_string(round) + "\n";
  out += cournot ? "- Quantities = {" : "- Prices = {";
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out += ", ";
    out += "firm_" + std::to_string(i) + ": " + std::to_string(actions[i]);
  }
  out += "}\n";
  if (cournot) {
    Units total = 0;
    for (Units q : actions) total += q;
    out += "- Market price = " + fmt::fixed(*c.price, 2) + "\n";
    out += "- Total quantity = " + std::to_string(total) + "\n";
  } else {
    out += "- Sales volumes = " + fmt::real_list(c.sales) + "\n";
  }
  out += "- Firms' profits = " + fmt::real_list(c.profits) + "\n";
  out += "- Cumulative reward = " + fmt::fixed(cumulative_reward, 2);
  return out;
}

// ---------------------------------------------------------------------------
// Beer-game prompts

namespace detail {

inline std::string performance_line(const std::vector<double>& rewards) {
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  const double last = rewards.back();
  if (last < mean) return "Your recent decisions have been less profitable than your average performance.";
  if (last > mean) return "Your recent decisions have been more profitable than your average performance.";
  return "Your recent performance has been consistent with your average.";
}

inline std::string beer_state_description(const Observation& obs) {
  std::string out;
  auto line = [&out](const std::string& s) {
    if (!out.empty()) out += "\n";
    out += "- " + s;
  };
  line("Lead Time: " + std::to_string(obs.lead_time) + " round(s)");
  line("Inventory Level: " + std::to_string(obs.on_hand) + " unit(s)");
  line("Current Backlog (you owing to the downstream): " + std::to_string(obs.backlog) + " unit(s)");
  if (obs.upstream_backlog)
    line("Upstream Backlog (your upstream owing to you): " + std::to_string(*obs.upstream_backlog) + " unit(s)");
  line("Previous Sales (in the recent round(s), from old to new): " + fmt::int_list(obs.recent_sales));
  line("Arriving Deliveries (in this and the next round(s), from near to far): " +
       fmt::int_list(obs.arriving_deliveries));
  if (obs.is_retailer()) {
    if (obs.demand_history)
      line("Recent consumer demands (from old to new): " + fmt::int_list(*obs.demand_history));
    if (obs.demand_range_hint)
      line("Your market research indicates customer demand varies between " +
           std::to_string(obs.demand_range_hint->first) + " and " +
           std::to_string(obs.demand_range_hint->second) + " units per round.");
    if (obs.demand_normal_hint)
      line("Your market research indicates customer demand averages " +
           fmt::real(obs.demand_normal_hint->mean) + " units per round with a standard deviation of " +
           fmt::real(obs.demand_normal_hint->sd) + " units.");
  } else {
    line("Historical orders from your downstream (from old to new): " + fmt::int_list(obs.received_orders));
    if (obs.received_order_now)
      line("Your immediate downstream has just placed an order of " +
           std::to_string(*obs.received_order_now) + " units.");
  }
  line("Your historical rewards/profits (from old to new): " + fmt::compact_list(obs.reward_history));
  if (!obs.reward_history.empty()) {
    line("Your most recent reward was " + fmt::compact(obs.reward_history.back()) +
         ", which reflects your reward in the previous round.");
    line(performance_line(obs.reward_history));
  }
  if (obs.upstream_info) {
    const auto& u = *obs.upstream_info;
    line("Upstream stage " + std::to_string(obs.stage_index + 2) + " (" +
         stage_role(obs.stage_index + 1, obs.num_stages) + ") information: Lead Time: " +
         std::to_string(u.lead_time) + " round(s), Inventory Level: " + std::to_string(u.on_hand) +
         " unit(s), Current Backlog: " + std::to_string(u.backlog) + " unit(s)");
  }
  return out;
}

}  // namespace detail

/// System message = risk preamble, plus the information-sharing notice under
/// sharing. Process message = round header, state block, stage guidelines.
inline PromptBundle render_beer_prompts(const BeerScenario& scenario, const Observation& obs,
                                        std::optional<RiskPreference> risk, InfoMode info_mode) {
  if (obs.num_stages != static_cast<std::size_t>(scenario.num_stages) || obs.stage_index >= obs.num_stages)
    throw PromptError("observation does not match the scenario's stages");

  std::string system;
  if (risk) system = std::string(risk_preamble(*risk));
  if (info_mode == InfoMode::sharing) {
    if (!system.empty()) system += "\n\n";
    system += templates::information_sharing;
  }

  Placeholders p;
  p["round"] = std::to_string(obs.period + 1);
  p["horizon"] = std::to_string(obs.horizon);
  p["stage_number"] = std::to_string(obs.stage_index + 1);
  p["role"] = stage_role(obs.stage_index, obs.num_stages);
  p["num_stages"] = std::to_string(obs.num_stages);
  p["state_description"] = detail::beer_state_description(obs);
  p["guidelines"] = std::string(obs.is_topmost() ? templates::manufacturer_guidelines
                                                  : templates::downstream_guidelines);

  PromptBundle b;
  b.system_message = std::move(system);
  b.process_message = render_template(templates::beer_process, p);
  b.placeholders_resolved = std::move(p);
  return b;
}

/// The per-period outcome box. `period` is 0-based, as in the transcripts.
inline std::string render_beer_outcome(Units period, std::span<const Units> orders,
                                       std::span<const double> rewards, double episode_reward) {
  std::string out = "- period = " + std::to_string(period) + "\n- action_dict = {";
  for (std::size_t i = 0; i < orders.size(); ++i) {
    if (i) out += ", ";
    out += "'stage_" + std::to_string(i) + "': " + std::to_string(orders[i]);
  }
  out += "}\n- rewards = {";
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (i) out += ", ";
    out += "'stage_" + std::to_string(i) + "': " + fmt::compact(rewards[i]);
  }
  out += "}\n- episode_reward = " + fmt::compact(episode_reward);
  return out;
}

}  // namespace scmlab
