#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "harmonize/measurement.hpp"
#include "harmonize/prob.hpp"

namespace harmonize {

// Binned latent density: theta[r] is the mass of bin [r/R, (r+1)/R), so the
// density on that bin is R * theta[r].
struct BinnedLatent {
  std::vector<double> theta;
  double mu = 0.0;
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  // Objective change over the final iteration.
  double final_improvement = 0.0;
  // Bound on the distance of `loglik` from the optimum at termination.
  double gap = 0.0;

  int bins() const { return static_cast<int>(theta.size()); }

  static BinnedLatent uniform(int bins);

  nlohmann::json to_json() const;
  static BinnedLatent from_json(const nlohmann::json& j);
};

enum class SolverKind { EmFixedPoint, MirrorAscent };

struct FitOptions {
  std::size_t max_iters = 100000;
  // Stop once the objective improves by less than this over one iteration.
  double tolerance = 1e-10;
  // Optional second stopping condition: total variation between consecutive
  // iterates must also fall below this. Zero disables it.
  double step_tolerance = 0.0;
  // Stop as soon as the concavity bound max_r g_r - (1 + mu) on the distance
  // to the optimal objective falls below this. Zero disables it.
  double gap_tolerance = 0.0;
  SolverKind solver = SolverKind::EmFixedPoint;
  // Squared-extrapolation acceleration of the fixed-point map. Every accepted
  // cycle ends with a plain EM step, so lower-bound and monotonicity
  // properties of the iterates are kept.
  bool accelerate = true;
  // Lower clamp on the implied probability of observed rows, keeping log(0)
  // out of the iteration. Zero treats such rows as degenerate.
  double marginal_floor = 0.0;
  // Custom starting point; uniform when empty.
  std::vector<double> initial;
};

// sum_y p_hat(y) log(A_y . theta) + (mu / R) sum_r log(R theta_r).
double regularized_loglik(std::span<const double> theta, const DiscretizedModel& model,
                          const ScoreDistribution& p_hat, double mu);

// One regularized NPEM update:
//   theta'_r = theta_r / (1 + mu) * sum_y p_hat(y) A_yr / (A_y . theta) + mu / ((1 + mu) R).
// Throws DegenerateModelError when A_y . theta = 0 for an observed y.
std::vector<double> em_step(std::span<const double> theta, const DiscretizedModel& model,
                            const ScoreDistribution& p_hat, double mu);

// Regularized binned maximum-likelihood latent distribution.
BinnedLatent fit(const DiscretizedModel& model, const ScoreDistribution& p_hat, double mu,
                 const FitOptions& options = {});

// Pair-score fit: `model` is a second-order discretization and `p_hat2` a
// flattened paired distribution.
BinnedLatent fit_second_order(const SecondOrderModel& model, const ScoreDistribution& p_hat2, double mu,
                              const FitOptions& options = {});

// p_MA(y) = R * (A_y . theta).
ScoreDistribution implied_marginal(std::span<const double> theta, const DiscretizedModel& model);

// ||p_MA^(t) - p_hat||_1 for t = 0..steps under unregularized EM from theta0.
std::vector<double> contraction_diagnostic(std::span<const double> theta0, const DiscretizedModel& model,
                                           const ScoreDistribution& p_hat, std::size_t steps);

// Gradient of the regularized objective with respect to theta.
std::vector<double> objective_gradient(std::span<const double> theta, const DiscretizedModel& model,
                                       const ScoreDistribution& p_hat, double mu);

}  // namespace harmonize
