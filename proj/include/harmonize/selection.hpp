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

// First and next visit of one subject. Covariates come from the first visit.
struct PairedObservation {
  std::string subject_id;
  int y1 = 0;
  int y2 = 0;
  double age = 0.0;
  std::string group;

  ObservationRecord first_record() const { return {subject_id, 1, "", y1, age, group}; }
};

struct PairedSample {
  int support = 0;
  std::vector<PairedObservation> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct PairingOptions {
  // Largest allowed time between the two visits, in days (ages are in years).
  double max_gap_days = 500.0;
  // Largest allowed difference in visit numbers; 0 means any.
  int max_visit_gap = 0;
};

// Pairs each subject's first visit of `test_id` with its next visit, when the
// next visit falls inside the gap limits. An empty test id keeps all tests.
PairedSample make_pairs(std::span<const ObservationRecord> records, const std::string& test_id, int support,
                        const PairingOptions& options = {});

// Empirical pmf of E = Y2 - Y1 over {-N..N}, stored at index e + N.
ScoreDistribution difference_distribution(const PairedSample& pairs);

// Empirical distribution of (Y1, Y2) flattened as y1 * (N + 1) + y2.
ScoreDistribution paired_distribution(const PairedSample& pairs);

// Empirical distribution of the first scores.
ScoreDistribution first_score_distribution(const PairedSample& pairs);

// Model-implied difference distribution
//   q_A(e) = sum_y1 p_hat(y1) sum_r w_r(y1) sum_y2 pbar_A(y2 | r) [y2 - y1 = e],
// with w the bin posterior given y1 and pbar_A the node-averaged kernel of bin r.
ScoreDistribution intrinsic_variability(const PairedSample& pairs, const DiscretizedModel& model,
                                        const BinnedLatent& latent);

// Monte-Carlo version: for each pair, `draws` times sample gamma from the
// posterior given y1, Y_hat ~ p_A(. | gamma), record Y_hat - y1.
ScoreDistribution intrinsic_variability_sampled(const PairedSample& pairs, const DiscretizedModel& model,
                                                const BinnedLatent& latent, int draws, Rng& rng);

struct ModelGrid {
  std::vector<MeasurementModel> models;

  // families x bandwidths, plus the binomial model when requested.
  static ModelGrid make(const std::vector<Family>& families, const std::vector<double>& bandwidths, int support,
                        bool include_binomial = true);
  // Gaussian and Laplace over a bandwidth grid around the usual range, plus binomial.
  static ModelGrid defaults(int support);
};

// Settings shared by the fits inside model and mu selection.
struct SelectionContext {
  int bins = kDefaultBins;
  int nodes_per_bin = kDefaultNodesPerBin;
  FitOptions fit;
};

// TV(q_hat, q_A) for one discretized candidate, fitting its latent at `mu` on
// the first scores.
double intrinsic_tv(const PairedSample& pairs, const DiscretizedModel& model, double mu,
                    const FitOptions& options = {});

struct ModelScore {
  MeasurementModel model;
  double mu = 0.0;
  double tv = 0.0;
};

struct ModelSelection {
  MeasurementModel best;
  std::vector<ModelScore> table;
};

// Argmin over the grid of TV(q_hat, q_A), with each latent fitted at `mu` on
// the first scores. Ties go to the larger bandwidth.
ModelSelection select_model(const PairedSample& pairs, const ModelGrid& grid, double mu,
                            const SelectionContext& context = {});

// (1 / n2) sum_i log(R * sum_r A2_(y1,y2),r theta_r(cell_i)).
double two_obs_loglik(const PairedSample& pairs, const SecondOrderModel& model2,
                      const std::vector<BinnedLatent>& latents, const CovariateScheme& scheme);

// 20 log-spaced values in [1e-4, 1].
std::vector<double> default_mu_grid();

struct MuScore {
  double mu = 0.0;
  double loglik = 0.0;
};

struct MuSelection {
  double best = 0.0;
  std::vector<MuScore> table;
};

// Argmax of the two-observation likelihood over `mu_grid`, fitting latents on
// the first-visit records of each cell. Ties go to the larger mu.
MuSelection select_mu(const PairedSample& pairs, std::span<const ObservationRecord> first_records,
                      const MeasurementModel& model, const std::vector<double>& mu_grid,
                      const CovariateScheme& scheme = {}, const SelectionContext& context = {});

// Same, reusing discretizations.
MuSelection select_mu(const PairedSample& pairs, std::span<const ObservationRecord> first_records,
                      const DiscretizedModel& model, const SecondOrderModel& model2,
                      const std::vector<double>& mu_grid, const CovariateScheme& scheme = {},
                      const FitOptions& options = {});

}  // namespace harmonize
