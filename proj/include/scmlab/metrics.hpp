#pragma once

// Post-hoc analytics over completed episodes: bullwhip variance
// amplification, information gain, and distance to equilibrium.

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "scmlab/market_games.hpp"

namespace scmlab {

class MetricError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Population variance (divides by N).
template <typename T>
double variance(std::span<const T> series) {
  if (series.empty()) throw MetricError("variance of an empty series");
  double mean = 0.0;
  for (T v : series) mean += static_cast<double>(v);
  mean /= static_cast<double>(series.size());
  double acc = 0.0;
  for (T v : series) {
    const double d = static_cast<double>(v) - mean;
    acc += d * d;
  }
  return acc / static_cast<double>(series.size());
}

inline double variance(const std::vector<Units>& s) { return variance(std::span<const Units>(s)); }
inline double variance(const std::vector<double>& s) { return variance(std::span<const double>(s)); }

struct BullwhipReport {
  double demand_variance = 0.0;
  std::vector<double> order_variance;
  std::vector<double> amplification;
};

struct AmplificationOptions {
  std::size_t warmup = 0;  // leading periods excluded from every series
  std::optional<double> demand_variance_override;  // e.g. the model's theoretical variance
};

/// ratio_i = Var(orders_i) / Var(demand).
inline BullwhipReport amplification(const std::vector<std::vector<Units>>& orders,
                                    const std::vector<Units>& demand,
                                    const AmplificationOptions& options = {}) {
  auto trimmed = [&](const std::vector<Units>& s) {
    if (options.warmup >= s.size()) throw MetricError("warm-up window leaves no data");
    return std::vector<Units>(s.begin() + static_cast<std::ptrdiff_t>(options.warmup), s.end());
  };
  BullwhipReport r;
  r.demand_variance = options.demand_variance_override.value_or(variance(trimmed(demand)));
  if (!(r.demand_variance > 0.0))
    throw MetricError("amplification undefined: demand variance is zero");
  for (const auto& stage : orders) {
    const double v = variance(trimmed(stage));
    r.order_variance.push_back(v);
    r.amplification.push_back(v / r.demand_variance);
  }
  return r;
}

/// Percentage reduction in amplification when information is shared.
inline double information_gain(double amp_without, double amp_with) {
  if (amp_without == 0.0) throw MetricError("information gain undefined: baseline amplification is zero");
  return 100.0 * (amp_without - amp_with) / amp_without;
}

struct ConvergenceReport {
  std::vector<std::vector<double>> action_deviation;  // [round][firm]
  std::vector<double> price_deviation;                // Cournot only
  std::vector<double> trailing_action_deviation;      // per firm, mean over last k rounds
  std::optional<double> trailing_price_deviation;
};

inline ConvergenceReport convergence(const MarketState& history, const EquilibriumSolution& eq,
                                     std::size_t k) {
  const std::size_t rounds = history.rounds.size();
  if (k == 0 || k > rounds) throw MetricError("trailing window must be within the rounds played");
  const std::size_t n = eq.actions.size();
  ConvergenceReport r;
  const bool has_price = eq.kind == ActionKind::quantity && eq.market_price.has_value();
  for (const auto& round : history.rounds) {
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i)
      dev[i] = std::abs(static_cast<double>(round.actions[i]) - eq.actions[i]);
    r.action_deviation.push_back(std::move(dev));
    if (has_price && round.clearing.price) r.price_deviation.push_back(std::abs(*round.clearing.price - *eq.market_price));
  }
  r.trailing_action_deviation.assign(n, 0.0);
  for (std::size_t t = rounds - k; t < rounds; ++t)
    for (std::size_t i = 0; i < n; ++i) r.trailing_action_deviation[i] += r.action_deviation[t][i];
  for (double& v : r.trailing_action_deviation) v /= static_cast<double>(k);
  if (!r.price_deviation.empty()) {
    double sum = 0.0;
    for (std::size_t t = rounds - k; t < rounds; ++t) sum += r.price_deviation[t];
    r.trailing_price_deviation = sum / static_cast<double>(k);
  }
  return r;
}

/// Mean and population standard deviation for repetition aggregates.
struct Spread {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

inline Spread spread(const std::vector<double>& values) {
  Spread s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  s.stddev = std::sqrt(variance(values));
  return s;
}

}  // namespace scmlab
