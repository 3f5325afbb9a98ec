#pragma once

// Shared domain types for the beer game and the oligopoly markets: demand
// models, scenario descriptions, validation, and seeded random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace scmlab {

/// Integer quantity of goods (demand, orders, inventory) or an integer action.
using Units = std::int64_t;

using Rng = std::mt19937_64;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ValidationIssue {
  std::string path;
  std::string message;
};

class ValidationError : public ConfigError {
public:
  explicit ValidationError(std::vector<ValidationIssue> issues)
      : ConfigError(summarize(issues)), issues_(std::move(issues)) {}

  const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

private:
  static std::string summarize(const std::vector<ValidationIssue>& issues) {
    std::string out = "invalid scenario:";
    for (const auto& issue : issues) out += " [" + issue.path + "] " + issue.message + ";";
    return out;
  }

  std::vector<ValidationIssue> issues_;
};

// Stream identifiers used when splitting a scenario seed.
enum class Stream : std::uint64_t {
  demand = 1,
  tie_break = 2,
  mock_llm = 3,
  policy_base = 100,
};

/// Derives an independent generator from a scenario seed and a consumer id.
inline Rng split_stream(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32)};
  return Rng(seq);
}

inline Rng split_stream(std::uint64_t seed, Stream stream, std::uint64_t offset = 0) {
  return split_stream(seed, static_cast<std::uint64_t>(stream) + offset);
}

/// Round half up, used for every policy output.
inline Units round_half_up(double x) { return static_cast<Units>(std::floor(x + 0.5)); }

// ---------------------------------------------------------------------------
// Demand models

struct ConstantDemand {
  Units level = 0;
};

struct UniformIntDemand {
  Units lo = 0;
  Units hi = 0;
};

struct DemandPhase {
  Units length = 0;
  Units lo = 0;
  Units hi = 0;
};

struct SeasonalUniformDemand {
  std::vector<DemandPhase> phases;
};

struct NormalRoundedDemand {
  double mean = 0.0;
  double sd = 1.0;
};

using DemandModel =
    std::variant<ConstantDemand, UniformIntDemand, SeasonalUniformDemand, NormalRoundedDemand>;

/// Rounds a normal draw half away from zero and clamps it at zero.
inline Units clamp_normal_draw(double draw) {
  return std::max<Units>(0, static_cast<Units>(std::round(draw)));
}

inline Units sample_demand(const DemandModel& model, Units period, Rng& rng) {
  struct Visitor {
    Units period;
    Rng& rng;

    Units operator()(const ConstantDemand& d) const { return d.level; }
    Units operator()(const UniformIntDemand& d) const {
      return std::uniform_int_distribution<Units>(d.lo, d.hi)(rng);
    }
    Units operator()(const SeasonalUniformDemand& d) const {
      if (period < 0) throw ConfigError("demand period " + std::to_string(period) + " is negative");
      Units start = 0;
      for (const auto& phase : d.phases) {
        if (period < start + phase.length)
          return std::uniform_int_distribution<Units>(phase.lo, phase.hi)(rng);
        start += phase.length;
      }
      throw ConfigError("demand period " + std::to_string(period) +
                        " lies outside all seasonal phases");
    }
    Units operator()(const NormalRoundedDemand& d) const {
      return clamp_normal_draw(std::normal_distribution<double>(d.mean, d.sd)(rng));
    }
  };
  return std::visit(Visitor{period, rng}, model);
}

/// Smallest and largest demand the model can produce, when bounded.
inline std::pair<Units, Units> demand_bounds(const DemandModel& model) {
  struct Visitor {
    std::pair<Units, Units> operator()(const ConstantDemand& d) const { return {d.level, d.level}; }
    std::pair<Units, Units> operator()(const UniformIntDemand& d) const { return {d.lo, d.hi}; }
    std::pair<Units, Units> operator()(const SeasonalUniformDemand& d) const {
      if (d.phases.empty()) return {0, 0};
      Units lo = d.phases.front().lo;
      Units hi = d.phases.front().hi;
      for (const auto& p : d.phases) {
        lo = std::min(lo, p.lo);
        hi = std::max(hi, p.hi);
      }
      return {lo, hi};
    }
    std::pair<Units, Units> operator()(const NormalRoundedDemand& d) const {
      return {0, round_half_up(d.mean + 3.0 * d.sd)};
    }
  };
  return std::visit(Visitor{}, model);
}

/// Variance of one draw under the model, for the theoretical denominator
/// option in bullwhip reporting. Integer-uniform variance is ((hi-lo+1)^2-1)/12.
inline double theoretical_demand_variance(const DemandModel& model) {
  auto uniform_var = [](Units lo, Units hi) {
    const double width = static_cast<double>(hi - lo + 1);
    return (width * width - 1.0) / 12.0;
  };
  struct Visitor {
    decltype(uniform_var)& uv;
    double operator()(const ConstantDemand&) const { return 0.0; }
    double operator()(const UniformIntDemand& d) const { return uv(d.lo, d.hi); }
    double operator()(const SeasonalUniformDemand& d) const {
      // Mixture over periods: E[Var] + Var[E].
      double total = 0.0, mean_acc = 0.0, sq_acc = 0.0;
      for (const auto& p : d.phases) {
        const double w = static_cast<double>(p.length);
        const double m = 0.5 * static_cast<double>(p.lo + p.hi);
        total += w;
        mean_acc += w * m;
        sq_acc += w * (uv(p.lo, p.hi) + m * m);
      }
      if (total == 0.0) return 0.0;
      const double mean = mean_acc / total;
      return sq_acc / total - mean * mean;
    }
    double operator()(const NormalRoundedDemand& d) const { return d.sd * d.sd; }
  };
  return std::visit(Visitor{uniform_var}, model);
}

// ---------------------------------------------------------------------------
// Scenario types

enum class InfoMode { isolated, sharing };
enum class RiskPreference { averse, neutral, appetite };

inline const char* to_string(InfoMode m) { return m == InfoMode::isolated ? "isolated" : "sharing"; }

inline const char* to_string(RiskPreference r) {
  switch (r) {
    case RiskPreference::averse: return "averse";
    case RiskPreference::neutral: return "neutral";
    case RiskPreference::appetite: return "appetite";
  }
  return "?";
}

struct BeerScenario {
  int num_stages = 4;
  Units horizon = 24;
  std::vector<Units> initial_inventory;
  std::vector<Units> lead_time;
  std::vector<Units> capacity;
  std::vector<double> holding_cost;
  std::vector<double> backlog_cost;
  DemandModel demand = UniformIntDemand{0, 8};
  InfoMode info_mode = InfoMode::isolated;
  std::uint64_t seed = 0;
};

struct CournotMarket {
  double a = 100.0;
  double b = 1.0;
  std::vector<double> costs;
};

struct BertrandHomogeneousMarket {
  double a = 100.0;
  double b = 1.0;
  std::vector<double> costs;
  double tick = 1.0;
};

/// Firm i sells max(0, A_i - B_i p_i + sum_j d_ij p_j).
struct BertrandDifferentiatedMarket {
  std::vector<double> intercepts;
  std::vector<double> slopes;
  std::vector<std::vector<double>> substitution;
  std::vector<double> costs;
};

using MarketModel = std::variant<CournotMarket, BertrandHomogeneousMarket, BertrandDifferentiatedMarket>;

struct MarketScenario {
  MarketModel model;
  Units rounds = 10;
  std::uint64_t seed = 0;
};

inline std::size_t num_firms(const MarketScenario& s) {
  return std::visit([](const auto& m) { return m.costs.size(); }, s.model);
}

inline const std::vector<double>& firm_costs(const MarketScenario& s) {
  return std::visit([](const auto& m) -> const std::vector<double>& { return m.costs; }, s.model);
}

/// Substitution matrix d_ij = base / heterogeneity_j: a firm with a larger
/// heterogeneity coefficient is harder to substitute away from.
inline std::vector<std::vector<double>> substitution_from_heterogeneity(
    const std::vector<double>& heterogeneity, double base) {
  const std::size_t n = heterogeneity.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) d[i][j] = base / heterogeneity[j];
  return d;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void validate_demand(const DemandModel& model, Units horizon, std::vector<ValidationIssue>& out) {
  struct Visitor {
    Units horizon;
    std::vector<ValidationIssue>& out;
    void operator()(const ConstantDemand& d) const {
      if (d.level < 0) out.push_back({"demand.level", "level must be >= 0"});
    }
    void operator()(const UniformIntDemand& d) const {
      if (d.lo < 0) out.push_back({"demand.lo", "lo must be >= 0"});
      if (d.lo > d.hi) out.push_back({"demand", "lo must not exceed hi"});
    }
    void operator()(const SeasonalUniformDemand& d) const {
      if (d.phases.empty()) out.push_back({"demand.phases", "at least one phase required"});
      Units sum = 0;
      for (std::size_t i = 0; i < d.phases.size(); ++i) {
        const auto& p = d.phases[i];
        const std::string path = "demand.phases[" + std::to_string(i) + "]";
        if (p.length < 1) out.push_back({path + ".length", "phase length must be >= 1"});
        if (p.lo < 0) out.push_back({path + ".lo", "lo must be >= 0"});
        if (p.lo > p.hi) out.push_back({path, "lo must not exceed hi"});
        sum += p.length;
      }
      if (sum != horizon)
        out.push_back({"demand.phases", "phase lengths sum to " + std::to_string(sum) +
                                            " but horizon is " + std::to_string(horizon)});
    }
    void operator()(const NormalRoundedDemand& d) const {
      if (!(d.sd > 0.0)) out.push_back({"demand.sd", "sd must be > 0"});
      if (!(d.mean >= 0.0)) out.push_back({"demand.mean", "mean must be >= 0"});
    }
  };
  std::visit(Visitor{horizon, out}, model);
}

template <typename T, typename Pred>
void check_each(const std::vector<T>& values, const std::string& name, std::size_t expected,
                Pred ok, const std::string& rule, std::vector<ValidationIssue>& out) {
  if (values.size() != expected) {
    out.push_back({name, "expected " + std::to_string(expected) + " entries, got " +
                             std::to_string(values.size())});
    return;
  }
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!ok(values[i])) out.push_back({name + "[" + std::to_string(i) + "]", rule});
}

}  // namespace detail

inline std::vector<ValidationIssue> validate(const BeerScenario& s) {
  std::vector<ValidationIssue> out;
  if (s.num_stages < 2) out.push_back({"num_stages", "num_stages must be >= 2"});
  if (s.horizon < 1) out.push_back({"horizon", "horizon must be >= 1"});
  const auto n = static_cast<std::size_t>(std::max(s.num_stages, 0));
  detail::check_each(s.initial_inventory, "initial_inventory", n, [](Units v) { return v >= 0; },
                     "must be >= 0", out);
  detail::check_each(s.lead_time, "lead_time", n, [](Units v) { return v >= 1; }, "must be >= 1", out);
  detail::check_each(s.capacity, "capacity", n, [](Units v) { return v > 0; }, "must be > 0", out);
  detail::check_each(s.holding_cost, "holding_cost", n, [](double v) { return v >= 0.0; },
                     "must be >= 0", out);
  detail::check_each(s.backlog_cost, "backlog_cost", n, [](double v) { return v >= 0.0; },
                     "must be >= 0", out);
  detail::validate_demand(s.demand, s.horizon, out);
  return out;
}

inline std::vector<ValidationIssue> validate(const MarketScenario& s) {
  std::vector<ValidationIssue> out;
  if (s.rounds < 1) out.push_back({"rounds", "rounds must be >= 1"});

  auto check_linear = [&out](double a, double b, const std::vector<double>& costs) {
    if (costs.empty()) out.push_back({"costs", "at least one firm required"});
    if (!(b > 0.0)) out.push_back({"b", "slope b must be > 0"});
    for (std::size_t i = 0; i < costs.size(); ++i)
      if (costs[i] < 0.0) out.push_back({"costs[" + std::to_string(i) + "]", "must be >= 0"});
    if (!costs.empty() && !(a > *std::max_element(costs.begin(), costs.end())))
      out.push_back({"a", "a <= max cost: some firm can never be profitable"});
  };

  struct Visitor {
    decltype(check_linear)& linear;
    std::vector<ValidationIssue>& out;
    void operator()(const CournotMarket& m) const { linear(m.a, m.b, m.costs); }
    void operator()(const BertrandHomogeneousMarket& m) const {
      linear(m.a, m.b, m.costs);
      if (!(m.tick > 0.0)) out.push_back({"tick", "tick must be > 0"});
    }
    void operator()(const BertrandDifferentiatedMarket& m) const {
      const std::size_t n = m.costs.size();
      if (n == 0) out.push_back({"costs", "at least one firm required"});
      if (m.intercepts.size() != n) out.push_back({"intercepts", "one intercept per firm required"});
      if (m.slopes.size() != n) out.push_back({"slopes", "one slope per firm required"});
      if (m.substitution.size() != n) {
        out.push_back({"substitution", "substitution matrix must be n x n"});
        return;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::string row = "substitution[" + std::to_string(i) + "]";
        if (m.substitution[i].size() != n) {
          out.push_back({row, "substitution matrix must be n x n"});
          continue;
        }
        if (m.substitution[i][i] != 0.0) out.push_back({row, "diagonal entry must be 0"});
        double off = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (m.substitution[i][j] < 0.0)
            out.push_back({row + "[" + std::to_string(j) + "]", "must be >= 0"});
          off += m.substitution[i][j];
        }
        if (i < m.slopes.size()) {
          if (!(m.slopes[i] > 0.0))
            out.push_back({"slopes[" + std::to_string(i) + "]", "must be > 0"});
          else if (!(2.0 * m.slopes[i] > off))
            out.push_back({row, "2B must exceed the summed substitution coefficients"});
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        if (m.costs[i] < 0.0) out.push_back({"costs[" + std::to_string(i) + "]", "must be >= 0"});
    }
  };
  std::visit(Visitor{check_linear, out}, s.model);
  return out;
}

/// Returns the scenario unchanged when valid, otherwise throws every issue at once.
template <typename Scenario>
const Scenario& require_valid(const Scenario& s) {
  auto issues = validate(s);
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return s;
}

}  // namespace scmlab
