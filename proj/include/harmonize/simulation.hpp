#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "harmonize/conversion.hpp"
#include "harmonize/measurement.hpp"
#include "harmonize/prob.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/selection.hpp"

namespace harmonize {

// Beta(a, b) latent law and the measurement model of one instrument.
struct BranchConfig {
  double a = 12.0;
  double b = 5.0;
  MeasurementModel model = MeasurementModel::kernel(Family::Gaussian, 2.0, 30);
  std::string test_id = "Y";
};

struct SimulationConfig {
  BranchConfig y{12.0, 5.0, MeasurementModel::kernel(Family::Gaussian, 2.0, 30), "Y"};
  BranchConfig z{6.0, 6.0, MeasurementModel::kernel(Family::Laplace, 1.0, 30), "Z"};
  // Subjects per study; the first n2 of them also have a second visit.
  std::size_t n = 100;
  std::size_t n2 = 100;
  // Extra subjects observed on both instruments.
  std::size_t crosswalk_n = 0;
  std::uint64_t seed = 1;

  // Throws ConfigError on invalid parameters.
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep the values already in `base`.
  static SimulationConfig from_json(const nlohmann::json& j, SimulationConfig base);
  static SimulationConfig from_json(const nlohmann::json& j);
};

// Inverse regularized incomplete beta, |I_x(a, b) - u| <= 1e-12.
double beta_quantile(double u, double a, double b);

struct SimulatedData {
  // Visit 1 for every subject, visit 2 for the first n2.
  std::vector<ObservationRecord> y_records;
  std::vector<ObservationRecord> z_records;
  PairedSample y_pairs;
  PairedSample z_pairs;
  std::vector<CrosswalkRecord> crosswalk;
  // Shared quantile and latent traits per subject, crosswalk subjects last.
  std::vector<double> omega;
  std::vector<double> gamma;
  std::vector<double> zeta;
};

// Subject i draws omega_i ~ U(0, 1), gamma_i = F^{-1}(omega_i),
// zeta_i = G^{-1}(omega_i) and its scores from a stream keyed by (seed, i),
// so output does not depend on thread count.
SimulatedData simulate_harmonizable(const SimulationConfig& config);

// p0(y, z) = int_0^1 p_AY(y | F^{-1}(w)) p_AZ(z | G^{-1}(w)) dw, integrated
// over gamma = F^{-1}(w) with a composite Gauss-Legendre rule of about
// `grid_size` nodes.
ScoreMatrix true_joint(const SimulationConfig& config, int grid_size = 20000);

// p0(y) of the source branch under the configured truth.
std::vector<double> true_marginal_y(const SimulationConfig& config, int grid_size = 20000);

// Row-normalized p0(z | y); rows with p0(y) = 0 stay zero.
ScoreMatrix conditional_from_joint(const ScoreMatrix& joint);

}  // namespace harmonize
