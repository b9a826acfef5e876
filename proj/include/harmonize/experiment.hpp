#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "harmonize/simulation.hpp"

namespace harmonize {

// A CSV table. The report prepends config_hash and seed to every row.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct RunReport {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<Table> tables;

  const Table& table(const std::string& name) const;
  // Writes <dir>/<table>.csv for every table and <dir>/config.json.
  void write(const std::filesystem::path& dir) const;
  void write_table(std::ostream& out, const Table& table) const;
};

// Experiment names: intrinsic, mu-selection, conversion-ce, feasibility, speed.
struct ExperimentConfig {
  std::string name;
  SimulationConfig simulation;
  std::size_t replicates = 1;
  int bins = kDefaultBins;
  int nodes_per_bin = kDefaultNodesPerBin;
  double tolerance = 1e-10;
  // Candidate grid for model selection and the feasibility sweep.
  std::vector<std::string> families = {"gaussian", "laplace"};
  std::vector<double> bandwidths = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0};
  bool include_binomial = true;
  // mu values evaluated by `intrinsic` and `speed`.
  std::vector<double> mu_values = {0.001, 0.01, 0.1};
  std::vector<double> mu_grid = default_mu_grid();
  // mu used while selecting the measurement model in `conversion-ce`.
  double selection_mu = 0.01;
  int feasibility_bins = 200;
  double feasibility_tolerance = 1e-8;
  std::size_t speed_em_steps = 10000;
  // Stopping rule of the timed fits: optimality gap bound, plus acceleration.
  double speed_gap_tolerance = 1e-4;
  bool speed_accelerate = false;

  // Defaults for a named experiment; throws ConfigError for unknown names.
  static ExperimentConfig defaults(const std::string& name);
  // Overrides from JSON; `experiment` selects the defaults when present.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& name = "");

  nlohmann::json to_json() const;
  // FNV-1a of the canonical JSON without the seed, as 16 hex digits.
  std::string hash() const;

  std::vector<MeasurementModel> candidate_models(int support) const;
};

std::vector<std::string> experiment_names();

RunReport run_experiment(const ExperimentConfig& config);

std::string format_number(double v);

// FNV-1a 64-bit.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace harmonize
