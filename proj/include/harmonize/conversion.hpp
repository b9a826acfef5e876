#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "harmonize/measurement.hpp"
#include "harmonize/prob.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/solver.hpp"

namespace harmonize {

// CDF of a binned latent density: linear within each of the R equal-width
// bins, with F(r / R) equal to the cumulative mass of the first r bins.
class PiecewiseLinearCDF {
 public:
  explicit PiecewiseLinearCDF(std::span<const double> theta);

  int bins() const { return static_cast<int>(mass_.size()); }
  // F(r / R) for r = 0..R; first entry 0, last entry exactly 1.
  std::span<const double> knots() const { return cumulative_; }

  double operator()(double q) const;

  // Generalized inverse inf{q : F(q) >= u}. Zero-mass bins are skipped, so a
  // flat segment maps to its left endpoint.
  double inverse(double u) const;

 private:
  std::vector<double> mass_;
  std::vector<double> cumulative_;
};

PiecewiseLinearCDF build_cdf(const BinnedLatent& latent);
double inverse_cdf(const PiecewiseLinearCDF& cdf, double u);

// phi(q) = G^{-1}(F(q)): carries a source latent value to the target latent
// value at the same population quantile.
class QuantileMap {
 public:
  QuantileMap(PiecewiseLinearCDF source, PiecewiseLinearCDF target)
      : source_(std::move(source)), target_(std::move(target)) {}

  double operator()(double q) const { return target_.inverse(source_(q)); }

  const PiecewiseLinearCDF& source() const { return source_; }
  const PiecewiseLinearCDF& target() const { return target_; }

 private:
  PiecewiseLinearCDF source_;
  PiecewiseLinearCDF target_;
};

QuantileMap quantile_map(const BinnedLatent& source, const BinnedLatent& target);

// Posterior bin weights p(gamma in bin r | y), proportional to A_yr theta_r.
// Throws DegenerateModelError when the implied probability of y is zero.
std::vector<double> posterior_gamma(int y, const BinnedLatent& latent, const DiscretizedModel& model);

// One side of a conversion: a measurement model and its fitted latent for each
// covariate cell.
struct ConversionBranch {
  DiscretizedModel discretized;
  std::vector<BinnedLatent> latents;

  const MeasurementModel& model() const { return discretized.model(); }
};

// Fits one latent per covariate cell from the first-visit records.
ConversionBranch fit_branch(std::span<const ObservationRecord> records, const CovariateScheme& scheme,
                            DiscretizedModel discretized, double mu, const FitOptions& options = {});

struct ConversionModel {
  ConversionBranch source;
  ConversionBranch target;
  CovariateScheme scheme;

  // Throws ConfigError if branches disagree with the scheme or each other.
  void validate() const;
};

// p(z | y, cell) for every source score y: rows indexed by y, columns by z.
ScoreMatrix conversion_table(const ConversionModel& model, std::size_t cell);

// p(z | y, cell) for a single source score.
ScoreDistribution convert_pmf(int y, std::size_t cell, const ConversionModel& model);

// Monte-Carlo conversion of each record's source score: J draws of
// gamma ~ posterior (uniform within the chosen bin), zeta = phi(gamma),
// Z ~ p_{A_Z}(. | zeta).
std::vector<std::vector<int>> conversion_sample(std::span<const ObservationRecord> records,
                                                const ConversionModel& model, int draws, Rng& rng);

// A crosswalk observation: both instruments scored on the same subject.
struct CrosswalkRecord {
  std::string subject_id;
  int y = 0;
  int z = 0;
  double age = 0.0;
  std::string group;

  ObservationRecord as_source_record() const { return {subject_id, 1, "", y, age, group}; }
};

struct CrossEntropyResult {
  double value = 0.0;
  // Indices of records whose observed z had zero predicted probability.
  std::vector<std::size_t> zero_probability;
};

// -sum_i log p(z_i | y_i, x_i) for a conditional table per cell.
CrossEntropyResult sample_cross_entropy(std::span<const CrosswalkRecord> crosswalk,
                                        const std::vector<ScoreMatrix>& tables,
                                        const CovariateScheme& scheme);
CrossEntropyResult sample_cross_entropy(std::span<const CrosswalkRecord> crosswalk,
                                        const ConversionModel& model);

// sum_{y,z} -p0(y, z) log p_hat(z | y); +inf when p_hat vanishes where p0 > 0.
double population_cross_entropy(const ScoreMatrix& joint, const ScoreMatrix& conditional);

std::vector<CrosswalkRecord> read_crosswalk_csv(const std::string& path);
std::vector<CrosswalkRecord> read_crosswalk_csv(std::istream& in);
void write_crosswalk_csv(std::ostream& out, std::span<const CrosswalkRecord> records);

}  // namespace harmonize
