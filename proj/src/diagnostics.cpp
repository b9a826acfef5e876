#include "harmonize/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "harmonize/errors.hpp"

namespace harmonize {

FeasibilityResult kth_order_feasibility(const ScoreDistribution& p_hat_k, const DiscretizedModel& model,
                                        std::size_t n, const FeasibilityOptions& options) {
  if (n < 1) throw ConfigError("feasibility test needs n >= 1");
  if (model.order() > options.max_order) {
    throw ConfigError("feasibility order " + std::to_string(model.order()) + " exceeds the limit " +
                      std::to_string(options.max_order));
  }
  FeasibilityResult res;
  res.order = model.order();
  res.n = n;
  res.df = static_cast<double>(model.rows()) - 1.0;
  res.latent = fit(model, p_hat_k, 0.0, options.fit);
  res.marginal = implied_marginal(res.latent.theta, model);
  const double d = std::max(0.0, kl_divergence(p_hat_k, res.marginal));
  const double nd = static_cast<double>(n) * d;
  res.statistic = nd;
  res.p_value_asymptotic = std::isfinite(d) ? std::clamp(chi_square_sf(2.0 * nd, res.df), 0.0, 1.0) : 0.0;
  res.p_value_finite = std::isfinite(d) ? std::clamp(options.bound(d, n, model.rows()), 0.0, 1.0) : 0.0;
  return res;
}

FeasibilityResult first_order_feasibility(const ScoreDistribution& p_hat, const DiscretizedModel& model,
                                          std::size_t n, const FeasibilityOptions& options) {
  if (model.order() != 1) throw std::invalid_argument("first_order_feasibility: model is not first order");
  return kth_order_feasibility(p_hat, model, n, options);
}

FeasibilityResult second_order_feasibility(const ScoreDistribution& p_hat2, const SecondOrderModel& model,
                                           std::size_t n2, const FeasibilityOptions& options) {
  if (model.order() != 2) throw std::invalid_argument("second_order_feasibility: model is not second order");
  return kth_order_feasibility(p_hat2, model, n2, options);
}

}  // namespace harmonize
