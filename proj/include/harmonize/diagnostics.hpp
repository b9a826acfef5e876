#pragma once

#include <cstddef>

#include "harmonize/measurement.hpp"
#include "harmonize/prob.hpp"
#include "harmonize/solver.hpp"

namespace harmonize {

// Likelihood-ratio test of whether an empirical k-th order score distribution
// lies in the convex hull of the model's k-fold measurement pmfs.
struct FeasibilityResult {
  int order = 1;
  std::size_t n = 0;
  // n * D(p_hat_k || p_MA).
  double statistic = 0.0;
  // (N + 1)^k - 1.
  double df = 0.0;
  // P(chi2_df > 2 n D).
  double p_value_asymptotic = 1.0;
  // Concentration bound evaluated at D.
  double p_value_finite = 1.0;
  ScoreDistribution marginal;
  BinnedLatent latent;
  // The null is tested with the fitted marginal substituted for the unknown
  // one, so both p-values are conservative.
  bool conservative = true;
};

struct FeasibilityOptions {
  // mu is forced to 0 and marginal_floor defaults to 1e-12.
  FitOptions fit = default_fit();
  KlTailBound bound = multinomial_kl_tail_bound;
  // Orders above this are refused; the support grows as (N + 1)^k.
  int max_order = 2;

  static FitOptions default_fit() {
    FitOptions f;
    f.marginal_floor = 1e-12;
    f.accelerate = false;
    return f;
  }
};

FeasibilityResult first_order_feasibility(const ScoreDistribution& p_hat, const DiscretizedModel& model,
                                          std::size_t n, const FeasibilityOptions& options = {});

FeasibilityResult second_order_feasibility(const ScoreDistribution& p_hat2, const SecondOrderModel& model,
                                           std::size_t n2, const FeasibilityOptions& options = {});

// Any order; `model` must come from discretize_order with the same k.
FeasibilityResult kth_order_feasibility(const ScoreDistribution& p_hat_k, const DiscretizedModel& model,
                                        std::size_t n, const FeasibilityOptions& options = {});

}  // namespace harmonize
