#include "harmonize/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "harmonize/errors.hpp"
#include "harmonize/parallel.hpp"

namespace harmonize {
namespace {

void check_score(int score, int support, const std::string& subject) {
  if (score < 0 || score > support) {
    std::ostringstream os;
    os << "score " << score << " of subject '" << subject << "' outside 0.." << support;
    throw DataError(os.str());
  }
}

// Unnormalized posterior bin weights A_yr theta_r and their total.
double posterior_weights(int y, const DiscretizedModel& model, const BinnedLatent& latent,
                         std::vector<double>& w) {
  const auto a = model.row(y);
  w.resize(a.size());
  double total = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    w[r] = a[r] * latent.theta[r];
    total += w[r];
  }
  if (!(total > 0.0)) {
    throw DegenerateModelError("first score " + std::to_string(y) + " has zero implied probability");
  }
  return total;
}

void check_first_order(const PairedSample& pairs, const DiscretizedModel& model, const BinnedLatent& latent) {
  if (model.order() != 1) throw std::invalid_argument("intrinsic variability needs a first-order model");
  if (model.model().support() != pairs.support) throw ConfigError("model support differs from pair support");
  if (latent.bins() != model.bins()) throw std::invalid_argument("latent bin count differs from model");
  if (pairs.empty()) throw NoDataError("no paired observations");
}

}  // namespace

PairedSample make_pairs(std::span<const ObservationRecord> records, const std::string& test_id, int support,
                        const PairingOptions& options) {
  std::map<std::string, std::vector<std::size_t>> visits;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!test_id.empty() && records[i].test_id != test_id) continue;
    auto [it, inserted] = visits.try_emplace(records[i].subject_id);
    if (inserted) order.push_back(records[i].subject_id);
    it->second.push_back(i);
  }
  PairedSample out;
  out.support = support;
  for (const auto& subject : order) {
    auto idx = visits[subject];
    if (idx.size() < 2) continue;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].visit < records[b].visit; });
    const auto& first = records[idx[0]];
    const auto* next = &records[idx[1]];
    if (next->visit == first.visit) continue;
    if (options.max_visit_gap > 0 && next->visit - first.visit > options.max_visit_gap) continue;
    if (std::fabs(next->age - first.age) * 365.25 > options.max_gap_days) continue;
    check_score(first.score, support, subject);
    check_score(next->score, support, subject);
    out.pairs.push_back({subject, first.score, next->score, first.age, first.group});
  }
  return out;
}

ScoreDistribution difference_distribution(const PairedSample& pairs) {
  if (pairs.empty()) throw NoDataError("no paired observations");
  const int n = pairs.support;
  std::vector<double> w(2 * n + 1, 0.0);
  for (const auto& p : pairs.pairs) {
    check_score(p.y1, n, p.subject_id);
    check_score(p.y2, n, p.subject_id);
    w[p.y2 - p.y1 + n] += 1.0;
  }
  return ScoreDistribution::normalized(std::move(w), pairs.size());
}

ScoreDistribution paired_distribution(const PairedSample& pairs) {
  if (pairs.empty()) throw NoDataError("no paired observations");
  const int side = pairs.support + 1;
  std::vector<double> w(static_cast<std::size_t>(side) * side, 0.0);
  for (const auto& p : pairs.pairs) {
    check_score(p.y1, pairs.support, p.subject_id);
    check_score(p.y2, pairs.support, p.subject_id);
    w[static_cast<std::size_t>(p.y1) * side + p.y2] += 1.0;
  }
  return ScoreDistribution::normalized(std::move(w), pairs.size());
}

ScoreDistribution first_score_distribution(const PairedSample& pairs) {
  std::vector<int> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs.pairs) scores.push_back(p.y1);
  if (scores.empty()) throw NoDataError("no paired observations");
  return empirical(scores, pairs.support);
}

ScoreDistribution intrinsic_variability(const PairedSample& pairs, const DiscretizedModel& model,
                                        const BinnedLatent& latent) {
  check_first_order(pairs, model, latent);
  const int n = pairs.support;
  const int bins = model.bins();
  const ScoreDistribution p1 = first_score_distribution(pairs);
  std::vector<double> q(2 * n + 1, 0.0);
  std::vector<double> w;
  std::vector<double> given_y1(n + 1);
  for (int y1 = 0; y1 <= n; ++y1) {
    if (p1[y1] == 0.0) continue;
    const double total = posterior_weights(y1, model, latent, w);
    // sum_r w_r(y1) R A_{y2 r}
    for (int y2 = 0; y2 <= n; ++y2) {
      const auto a = model.row(y2);
      given_y1[y2] = std::inner_product(a.begin(), a.end(), w.begin(), 0.0) * bins / total;
    }
    for (int y2 = 0; y2 <= n; ++y2) q[y2 - y1 + n] += p1[y1] * given_y1[y2];
  }
  return ScoreDistribution::normalized(std::move(q));
}

ScoreDistribution intrinsic_variability_sampled(const PairedSample& pairs, const DiscretizedModel& model,
                                                const BinnedLatent& latent, int draws, Rng& rng) {
  check_first_order(pairs, model, latent);
  if (draws < 1) throw ConfigError("intrinsic variability needs at least one draw");
  const int n = pairs.support;
  const int bins = model.bins();
  std::vector<std::vector<double>> cumulative(n + 1);
  std::vector<double> w;
  std::vector<double> counts(2 * n + 1, 0.0);
  for (const auto& p : pairs.pairs) {
    auto& cum = cumulative[p.y1];
    if (cum.empty()) {
      posterior_weights(p.y1, model, latent, w);
      cum.resize(bins);
      std::partial_sum(w.begin(), w.end(), cum.begin());
    }
    for (int j = 0; j < draws; ++j) {
      const double u = rng.uniform() * cum.back();
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      const int r = std::min<int>(static_cast<int>(it - cum.begin()), bins - 1);
      const double gamma = std::min(1.0, (r + rng.uniform()) / bins);
      const int y_hat = sample_score(model.model(), gamma, rng);
      counts[y_hat - p.y1 + n] += 1.0;
    }
  }
  return ScoreDistribution::normalized(std::move(counts), pairs.size() * static_cast<std::size_t>(draws));
}

ModelGrid ModelGrid::make(const std::vector<Family>& families, const std::vector<double>& bandwidths, int support,
                          bool include_binomial) {
  ModelGrid grid;
  for (Family f : families) {
    if (f == Family::Binomial) continue;
    for (double h : bandwidths) grid.models.push_back(MeasurementModel::kernel(f, h, support));
  }
  if (include_binomial) grid.models.push_back(MeasurementModel::binomial(support));
  if (grid.models.empty()) throw ConfigError("model grid is empty");
  return grid;
}

ModelGrid ModelGrid::defaults(int support) {
  return make({Family::Gaussian, Family::Laplace}, {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0}, support);
}

double intrinsic_tv(const PairedSample& pairs, const DiscretizedModel& model, double mu, const FitOptions& options) {
  const BinnedLatent latent = fit(model, first_score_distribution(pairs), mu, options);
  return tv_distance(difference_distribution(pairs), intrinsic_variability(pairs, model, latent));
}

ModelSelection select_model(const PairedSample& pairs, const ModelGrid& grid, double mu,
                            const SelectionContext& context) {
  if (grid.models.empty()) throw ConfigError("model grid is empty");
  std::vector<double> tv(grid.models.size());
  parallel_for(grid.models.size(), [&](std::size_t i) {
    const DiscretizedModel d = discretize(grid.models[i], context.bins, context.nodes_per_bin);
    tv[i] = intrinsic_tv(pairs, d, mu, context.fit);
  });
  ModelSelection out{grid.models.front(), {}};
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.models.size(); ++i) {
    out.table.push_back({grid.models[i], mu, tv[i]});
    if (i == 0) continue;
    const double diff = tv[i] - tv[best];
    if (diff < -1e-12 ||
        (std::fabs(diff) <= 1e-12 && grid.models[i].bandwidth() > grid.models[best].bandwidth())) {
      best = i;
    }
  }
  out.best = grid.models[best];
  return out;
}

double two_obs_loglik(const PairedSample& pairs, const SecondOrderModel& model2,
                      const std::vector<BinnedLatent>& latents, const CovariateScheme& scheme) {
  if (model2.order() != 2) throw std::invalid_argument("two_obs_loglik needs a second-order model");
  if (pairs.empty()) throw NoDataError("no paired observations");
  const int side = pairs.support + 1;
  if (model2.model().support() != pairs.support) throw ConfigError("model support differs from pair support");
  const int bins = model2.bins();
  double total = 0.0;
  for (const auto& p : pairs.pairs) {
    const std::size_t cell = scheme.assign(p.first_record());
    if (cell >= latents.size()) throw ConfigError("no fitted latent for cell " + scheme.label(cell));
    const auto& theta = latents[cell].theta;
    if (theta.size() != static_cast<std::size_t>(bins)) throw std::invalid_argument("latent bin count differs");
    const auto a = model2.row(static_cast<std::size_t>(p.y1) * side + p.y2);
    const double prob = bins * std::inner_product(a.begin(), a.end(), theta.begin(), 0.0);
    if (!(prob > 0.0)) return -std::numeric_limits<double>::infinity();
    total += std::log(prob);
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<double> default_mu_grid() {
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[i] = std::pow(10.0, -4.0 + 4.0 * i / 19.0);
  return grid;
}

MuSelection select_mu(const PairedSample& pairs, std::span<const ObservationRecord> first_records,
                      const DiscretizedModel& model, const SecondOrderModel& model2,
                      const std::vector<double>& mu_grid, const CovariateScheme& scheme, const FitOptions& options) {
  if (mu_grid.empty()) throw ConfigError("mu grid is empty");
  const int support = model.model().support();
  std::vector<ScoreDistribution> cells;
  for (std::size_t c = 0; c < scheme.size(); ++c) cells.push_back(scheme.distribution(first_records, c, support));

  std::vector<double> ll(mu_grid.size());
  parallel_for(mu_grid.size(), [&](std::size_t i) {
    std::vector<BinnedLatent> latents;
    for (const auto& p : cells) latents.push_back(fit(model, p, mu_grid[i], options));
    ll[i] = two_obs_loglik(pairs, model2, latents, scheme);
  });
  MuSelection out;
  std::size_t best = 0;
  for (std::size_t i = 0; i < mu_grid.size(); ++i) {
    out.table.push_back({mu_grid[i], ll[i]});
    if (i == 0) continue;
    if (ll[i] > ll[best] || (ll[i] == ll[best] && mu_grid[i] > mu_grid[best])) best = i;
  }
  out.best = mu_grid[best];
  return out;
}

MuSelection select_mu(const PairedSample& pairs, std::span<const ObservationRecord> first_records,
                      const MeasurementModel& model, const std::vector<double>& mu_grid,
                      const CovariateScheme& scheme, const SelectionContext& context) {
  const DiscretizedModel d = discretize(model, context.bins, context.nodes_per_bin);
  const SecondOrderModel d2 = discretize_second_order(model, context.bins, context.nodes_per_bin);
  return select_mu(pairs, first_records, d, d2, mu_grid, scheme, context.fit);
}

}  // namespace harmonize
