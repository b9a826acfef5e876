#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "harmonize/measurement.hpp"
#include "harmonize/prob.hpp"
#include "harmonize/solver.hpp"

namespace harmonize {

// logit(gamma) | x ~ N(beta . x, 1 / lambda^2).
struct LogitNormalParams {
  std::vector<double> beta;
  double lambda = 1.0;

  double location(std::span<const double> x) const;
};

// Moments of the normalized likelihood r(gamma | y) = p_A(y | gamma) / c_y,
// integrated over [eps, 1 - eps] in t = logit(gamma).
struct PseudoResponse {
  double c = 0.0;          // integral of p_A(y | gamma)
  double logit = 0.0;      // E_r[logit(gamma)]
  double logit_sq = 0.0;   // E_r[logit(gamma)^2]
  double log_jacobian = 0.0;  // E_r[-log(gamma (1 - gamma))]
};

constexpr double kLogitEndpoint = 1e-10;

// E_r[logit(gamma)] for one score. Throws DegenerateModelError when the score
// has zero integrated probability.
double pseudo_response(int y, const MeasurementModel& model);

// All moments for every score 0..N.
std::vector<PseudoResponse> pseudo_responses(const MeasurementModel& model);

// Rows of the design matrix paired with scores.
struct LogitNormalData {
  std::vector<int> scores;
  std::vector<std::vector<double>> design;
};

// Maps a record to its covariate row.
using DesignFunction = std::function<std::vector<double>(const ObservationRecord&)>;

std::vector<double> intercept_design(const ObservationRecord& record);

LogitNormalData make_logit_normal_data(std::span<const ObservationRecord> records, const DesignFunction& design);

// Closed-form maximizer of the Jensen lower bound:
//   beta = (X'X)^{-1} X' s,  s_i = E_r[logit(gamma) | y_i],
//   1 / lambda^2 = mean_i E_r[(logit(gamma) - beta . x_i)^2 | y_i].
// Throws DataError for a rank-deficient design.
LogitNormalParams fit_logit_normal(const LogitNormalData& data, const MeasurementModel& model);
LogitNormalParams fit_logit_normal(std::span<const ObservationRecord> records, const DesignFunction& design,
                                   const MeasurementModel& model);

// Jensen lower bound sum_i int r(gamma | y_i) log(c_{y_i} p(gamma | x_i; params)) dgamma.
double logit_normal_lower_bound(const LogitNormalData& data, const MeasurementModel& model,
                                const LogitNormalParams& params);
// Same from precomputed moments.
double logit_normal_lower_bound(const LogitNormalData& data, const std::vector<PseudoResponse>& moments,
                                const LogitNormalParams& params);

// Marginal log-likelihood sum_i log int p_A(y_i | gamma) p(gamma | x_i; params) dgamma.
double logit_normal_loglik(const LogitNormalData& data, const MeasurementModel& model,
                           const LogitNormalParams& params);

// Density on (0, 1); throws std::domain_error outside.
double logit_normal_density(double gamma, std::span<const double> x, const LogitNormalParams& params);

// Exact bin masses of the logit-normal law with the given location.
BinnedLatent bin_logit_normal(double location, double lambda, int bins);

struct ZScoreParams {
  double mean_y = 0.0;
  double sd_y = 1.0;
  double mean_z = 0.0;
  double sd_z = 1.0;

  // Sample means and standard deviations; throws DataError when either
  // sample has fewer than two scores or zero spread.
  static ZScoreParams estimate(std::span<const int> y_scores, std::span<const int> z_scores);

  double z_hat(double y) const { return sd_z / sd_y * (y - mean_y) + mean_z; }
};

// Mass of N(z_hat(y), sd_z^2) on the rounding cells [z - 1/2, z + 1/2), with
// the two end cells absorbing the tails.
ScoreDistribution zscore_convert_pmf(int y, const ZScoreParams& params, int support_z);

// zscore_convert_pmf for every y in 0..support_y.
ScoreMatrix zscore_table(const ZScoreParams& params, int support_y, int support_z);

}  // namespace harmonize
