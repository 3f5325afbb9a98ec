#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "scmlab/core.hpp"

namespace scmlab::fixtures {

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string golden(const std::string& name) { return read_text(std::filesystem::path(SCMLAB_GOLDEN_DIR) / name); }

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(SCMLAB_SCENARIO_DIR) / name;
}

/// Four stages, 24 periods, integer-uniform demand on [0, 8].
inline BeerScenario risk_experiment_chain(std::uint64_t seed = 7) {
  BeerScenario s;
  s.num_stages = 4;
  s.horizon = 24;
  s.initial_inventory = {12, 12, 12, 12};
  s.lead_time = {2, 2, 2, 3};
  s.capacity = {20, 20, 20, 20};
  s.holding_cost = {0.5, 0.5, 0.5, 0.5};
  s.backlog_cost = {1, 1, 1, 1};
  s.demand = UniformIntDemand{0, 8};
  s.seed = seed;
  return s;
}

/// The twelve-period decision-test chains.
inline BeerScenario decision_test_chain(const std::string& name, std::uint64_t seed = 11) {
  BeerScenario s;
  s.num_stages = 4;
  s.horizon = 12;
  s.initial_inventory = {12, 12, 12, 12};
  s.lead_time = {2, 2, 2, 2};
  s.capacity = {20, 20, 20, 20};
  s.holding_cost = {0.5, 0.5, 0.5, 0.5};
  s.backlog_cost = {1, 1, 1, 1};
  s.seed = seed;
  if (name == "constant") s.demand = ConstantDemand{4};
  else if (name == "variable") s.demand = UniformIntDemand{0, 4};
  else if (name == "larger") s.demand = UniformIntDemand{0, 8};
  else if (name == "seasonal") s.demand = SeasonalUniformDemand{{{3, 0, 4}, {3, 4, 8}, {3, 0, 4}, {3, 4, 8}}};
  else if (name == "normal") {
    s.demand = NormalRoundedDemand{4, 2};
    s.initial_inventory = {12, 14, 16, 18};
    s.lead_time = {1, 2, 3, 4};
    s.capacity = {20, 22, 24, 26};
  } else {
    throw std::invalid_argument("unknown decision-test chain " + name);
  }
  return s;
}

}  // namespace scmlab::fixtures
