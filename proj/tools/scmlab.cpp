// scmlab: run scenarios, print equilibrium oracles, recompute metrics and
// export plot data.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "scmlab/runner.hpp"

namespace {

using namespace scmlab;

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, std::size_t reps, bool mock,
            const std::string& out, std::size_t jobs) {
  RunConfig config;
  config.scenario = load_scenario(scenario_path);
  config.scenario_path = scenario_path;
  config.base_seed = seed;
  config.repetitions = reps;
  config.mock = mock;
  config.out_dir = out.empty() ? std::filesystem::path("runs") / config.scenario.name : std::filesystem::path(out);
  config.parallelism = jobs ? jobs : static_cast<std::size_t>(std::max(1, config.scenario.client.concurrency));

  const RunSummary summary = run(config);
  std::size_t flagged = 0;
  for (const auto& e : summary.episodes) {
    std::cout << e.episode_id << ": " << e.actions.size() << " rounds, total reward "
              << fmt::fixed(e.total_reward, 2) << ", fallbacks " << e.fallback_count();
    if (e.flagged) {
      ++flagged;
      std::cout << ", ABORTED: " << e.abort_reason;
    }
    std::cout << "\n";
  }
  std::cout << "run directory: " << summary.dir.string() << "\n";
  if (flagged) std::cerr << flagged << " episode(s) aborted\n";
  return summary.all_clean() ? 0 : 1;
}

int cmd_equilibrium(const std::string& scenario_path) {
  const ScenarioFile file = load_scenario(scenario_path);
  if (file.is_beer()) {
    std::cerr << "equilibrium: beer-game scenarios have no market equilibrium\n";
    return 2;
  }
  const auto& s = std::get<MarketScenario>(file.game);
  const EquilibriumSolution eq = equilibrium(s);
  const bool quantity = eq.kind == ActionKind::quantity;
  json j = {{"kind", quantity ? "quantity" : "price"}, {"actions", eq.actions}, {"quantities", eq.quantities}};
  if (eq.aggregate_quantity) j["aggregate_quantity"] = *eq.aggregate_quantity;
  if (eq.market_price) j["market_price"] = *eq.market_price;
  if (eq.tick_feasible_actions) j["tick_feasible_actions"] = *eq.tick_feasible_actions;
  if (eq.tick_feasible_quantities) j["tick_feasible_quantities"] = *eq.tick_feasible_quantities;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_metrics(const std::string& dir) {
  const LoadedRun loaded = load_run(dir);
  const bool beer = loaded.episodes.front().is_beer();
  const std::string csv = beer ? metrics_csv(metrics_table(loaded.episodes)) : convergence_csv(loaded.episodes);
  std::cout << csv;
  return 0;
}

int cmd_plot_data(const std::string& dir) {
  for (const auto& p : emit_plot_data(dir)) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent supply chain and market game lab"};
  app.require_subcommand(1);

  std::string scenario, out, dir;
  std::optional<std::uint64_t> seed;
  std::size_t reps = 1, jobs = 0;
  bool mock = false;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write a run directory");
  run_cmd->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Base seed (repetition k uses seed + k)");
  run_cmd->add_option("--reps", reps, "Repetitions")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--mock", mock, "Use the offline mock endpoint instead of a live model");
  run_cmd->add_option("--out", out, "Output directory (default runs/<scenario name>)");
  run_cmd->add_option("--jobs", jobs, "Episodes run in parallel (default: client concurrency)");

  auto* eq_cmd = app.add_subcommand("equilibrium", "Print the oracle equilibrium of a market scenario");
  eq_cmd->add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);

  auto* metrics_cmd = app.add_subcommand("metrics", "Recompute the metrics table of a run directory");
  metrics_cmd->add_option("run_dir", dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* plot_cmd = app.add_subcommand("plot-data", "Write plot-ready CSVs under <run-dir>/plot");
  plot_cmd->add_option("run_dir", dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(scenario, seed, reps, mock, out, jobs);
    if (*eq_cmd) return cmd_equilibrium(scenario);
    if (*metrics_cmd) return cmd_metrics(dir);
    if (*plot_cmd) return cmd_plot_data(dir);
  } catch (const ValidationError& e) {
    std::cerr << "invalid scenario:\n";
    for (const auto& issue : e.issues()) std::cerr << "  " << issue.path << ": " << issue.message << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
