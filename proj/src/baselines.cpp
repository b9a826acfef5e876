#include "harmonize/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "harmonize/errors.hpp"
#include "harmonize/quadrature.hpp"

namespace harmonize {
namespace {

constexpr int kLogitPanels = 4000;
constexpr int kLogitNodes = 8;

double sigmoid(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Composite Gauss-Legendre nodes and weights on [lo, hi].
GaussLegendre composite_rule(double lo, double hi, int panels, int points) {
  const GaussLegendre base = gauss_legendre(points);
  GaussLegendre out;
  out.nodes.reserve(static_cast<std::size_t>(panels) * points);
  out.weights.reserve(out.nodes.capacity());
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * width;
    for (int k = 0; k < points; ++k) {
      out.nodes.push_back(mid + 0.5 * width * base.nodes[k]);
      out.weights.push_back(0.5 * width * base.weights[k]);
    }
  }
  return out;
}

void check_params(const LogitNormalParams& params, std::size_t d) {
  if (!(params.lambda > 0.0)) throw ConfigError("logit-normal lambda must be positive");
  if (params.beta.size() != d) throw std::invalid_argument("logit-normal beta length differs from design width");
}

void check_data(const LogitNormalData& data, int support) {
  if (data.scores.empty()) throw NoDataError("logit-normal fit needs at least one record");
  if (data.scores.size() != data.design.size()) throw std::invalid_argument("scores and design rows differ in count");
  const std::size_t d = data.design.front().size();
  if (d == 0) throw ConfigError("design has no columns");
  for (const auto& row : data.design) {
    if (row.size() != d) throw DataError("design rows have unequal length");
  }
  for (int y : data.scores) {
    if (y < 0 || y > support) throw DataError("score " + std::to_string(y) + " outside 0.." + std::to_string(support));
  }
}

}  // namespace

double LogitNormalParams::location(std::span<const double> x) const {
  if (x.size() != beta.size()) throw std::invalid_argument("covariate length differs from beta");
  double m = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) m += beta[j] * x[j];
  return m;
}

std::vector<PseudoResponse> pseudo_responses(const MeasurementModel& model) {
  const int n = model.support();
  const double t_max = std::log((1.0 - kLogitEndpoint) / kLogitEndpoint);
  // Panels split at the kinks of the pmf so each piece is smooth.
  std::vector<double> breaks{-t_max};
  for (double g : kink_points(model)) {
    const double t = std::log(g / (1.0 - g));
    if (t > breaks.back()) breaks.push_back(t);
  }
  if (t_max > breaks.back()) breaks.push_back(t_max);
  GaussLegendre rule;
  for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
    const double len = breaks[b + 1] - breaks[b];
    const int panels = std::max(1, static_cast<int>(std::ceil(kLogitPanels * len / (2.0 * t_max))));
    const GaussLegendre piece = composite_rule(breaks[b], breaks[b + 1], panels, kLogitNodes);
    rule.nodes.insert(rule.nodes.end(), piece.nodes.begin(), piece.nodes.end());
    rule.weights.insert(rule.weights.end(), piece.weights.begin(), piece.weights.end());
  }
  std::vector<double> c(n + 1, 0.0), s1(n + 1, 0.0), s2(n + 1, 0.0), sj(n + 1, 0.0);
  std::vector<double> p(n + 1);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double t = rule.nodes[k];
    const double g = sigmoid(t);
    // dgamma = gamma (1 - gamma) dt
    const double w = rule.weights[k] * g * sigmoid(-t);
    const double jac = softplus(t) + softplus(-t);
    model.pmf_into(g, p);
    for (int y = 0; y <= n; ++y) {
      const double wp = w * p[y];
      c[y] += wp;
      s1[y] += wp * t;
      s2[y] += wp * t * t;
      sj[y] += wp * jac;
    }
  }
  std::vector<PseudoResponse> out(n + 1);
  for (int y = 0; y <= n; ++y) {
    out[y].c = c[y];
    if (c[y] > 0.0) {
      out[y].logit = s1[y] / c[y];
      out[y].logit_sq = s2[y] / c[y];
      out[y].log_jacobian = sj[y] / c[y];
    }
  }
  return out;
}

double pseudo_response(int y, const MeasurementModel& model) {
  if (y < 0 || y > model.support()) throw std::out_of_range("score outside model support");
  const auto moments = pseudo_responses(model);
  if (!(moments[y].c > 0.0)) {
    throw DegenerateModelError("score " + std::to_string(y) + " has zero integrated probability");
  }
  return moments[y].logit;
}

std::vector<double> intercept_design(const ObservationRecord&) { return {1.0}; }

LogitNormalData make_logit_normal_data(std::span<const ObservationRecord> records, const DesignFunction& design) {
  LogitNormalData data;
  for (const auto& r : records) {
    data.scores.push_back(r.score);
    data.design.push_back(design(r));
  }
  return data;
}

LogitNormalParams fit_logit_normal(const LogitNormalData& data, const MeasurementModel& model) {
  check_data(data, model.support());
  const auto moments = pseudo_responses(model);
  const std::size_t n = data.scores.size();
  const std::size_t d = data.design.front().size();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = moments[data.scores[i]];
    if (!(m.c > 0.0)) {
      throw DegenerateModelError("score " + std::to_string(data.scores[i]) + " has zero integrated probability");
    }
    for (std::size_t j = 0; j < d; ++j) x(i, j) = data.design[i][j];
    s(i) = m.logit;
  }
  const Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.rank() < static_cast<Eigen::Index>(d)) throw DataError("logit-normal design matrix is rank deficient");
  const Eigen::VectorXd beta = lu.solve(x.transpose() * s);

  LogitNormalParams params;
  params.beta.assign(beta.data(), beta.data() + d);
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = moments[data.scores[i]];
    const double loc = params.location(data.design[i]);
    q += m.logit_sq - 2.0 * loc * m.logit + loc * loc;
  }
  q /= static_cast<double>(n);
  if (!(q > 0.0)) throw DegenerateModelError("logit-normal spread is zero");
  params.lambda = 1.0 / std::sqrt(q);
  return params;
}

LogitNormalParams fit_logit_normal(std::span<const ObservationRecord> records, const DesignFunction& design,
                                   const MeasurementModel& model) {
  return fit_logit_normal(make_logit_normal_data(records, design), model);
}

double logit_normal_lower_bound(const LogitNormalData& data, const std::vector<PseudoResponse>& moments,
                                const LogitNormalParams& params) {
  if (data.scores.empty()) throw NoDataError("lower bound needs at least one record");
  check_params(params, data.design.front().size());
  const double log_norm = std::log(params.lambda) - 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < data.scores.size(); ++i) {
    const auto& m = moments.at(data.scores[i]);
    if (!(m.c > 0.0)) return -std::numeric_limits<double>::infinity();
    const double loc = params.location(data.design[i]);
    const double spread = m.logit_sq - 2.0 * loc * m.logit + loc * loc;
    total += std::log(m.c) + m.log_jacobian + log_norm - 0.5 * params.lambda * params.lambda * spread;
  }
  return total;
}

double logit_normal_lower_bound(const LogitNormalData& data, const MeasurementModel& model,
                                const LogitNormalParams& params) {
  check_data(data, model.support());
  return logit_normal_lower_bound(data, pseudo_responses(model), params);
}

double logit_normal_loglik(const LogitNormalData& data, const MeasurementModel& model,
                           const LogitNormalParams& params) {
  check_data(data, model.support());
  check_params(params, data.design.front().size());
  const GaussLegendre unit = composite_rule(-12.0, 12.0, 400, kLogitNodes);
  std::vector<double> p(model.support() + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < data.scores.size(); ++i) {
    const double loc = params.location(data.design[i]);
    double value = 0.0;
    for (std::size_t k = 0; k < unit.nodes.size(); ++k) {
      const double u = unit.nodes[k];
      model.pmf_into(sigmoid(loc + u / params.lambda), p);
      value += unit.weights[k] * std::exp(-0.5 * u * u) * p[data.scores[i]];
    }
    total += std::log(value / std::sqrt(2.0 * std::numbers::pi));
  }
  return total;
}

double logit_normal_density(double gamma, std::span<const double> x, const LogitNormalParams& params) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("logit-normal density needs gamma in (0, 1)");
  check_params(params, x.size());
  const double t = std::log(gamma / (1.0 - gamma)) - params.location(x);
  return params.lambda / std::sqrt(2.0 * std::numbers::pi) *
         std::exp(-0.5 * params.lambda * params.lambda * t * t) / (gamma * (1.0 - gamma));
}

BinnedLatent bin_logit_normal(double location, double lambda, int bins) {
  if (bins < 1) throw ConfigError("bin count must be positive");
  if (!(lambda > 0.0)) throw ConfigError("logit-normal lambda must be positive");
  std::vector<double> cdf(bins + 1);
  cdf[0] = 0.0;
  cdf[bins] = 1.0;
  for (int r = 1; r < bins; ++r) {
    const double q = static_cast<double>(r) / bins;
    cdf[r] = normal_cdf(lambda * (std::log(q / (1.0 - q)) - location));
  }
  BinnedLatent b;
  b.theta.resize(bins);
  for (int r = 0; r < bins; ++r) b.theta[r] = std::max(0.0, cdf[r + 1] - cdf[r]);
  double total = 0.0;
  for (double t : b.theta) total += t;
  for (double& t : b.theta) t /= total;
  b.converged = true;
  return b;
}

ZScoreParams ZScoreParams::estimate(std::span<const int> y_scores, std::span<const int> z_scores) {
  auto moments = [](std::span<const int> s, const char* name) {
    if (s.size() < 2) throw DataError(std::string("z-score matching needs two or more ") + name + " scores");
    double mean = 0.0;
    for (int v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double ss = 0.0;
    for (int v : s) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(s.size() - 1));
    if (!(sd > 0.0)) throw DataError(std::string("z-score matching: ") + name + " scores have zero spread");
    return std::make_pair(mean, sd);
  };
  const auto [my, sy] = moments(y_scores, "source");
  const auto [mz, sz] = moments(z_scores, "target");
  return {my, sy, mz, sz};
}

ScoreDistribution zscore_convert_pmf(int y, const ZScoreParams& params, int support_z) {
  if (!(params.sd_y > 0.0)) throw ConfigError("z-score source spread must be positive");
  if (support_z < 0) throw ConfigError("target support must be nonnegative");
  const double z = params.z_hat(y);
  std::vector<double> p(support_z + 1, 0.0);
  if (!(params.sd_z > 0.0)) {
    const double rounded = std::clamp(std::floor(z + 0.5), 0.0, static_cast<double>(support_z));
    p[static_cast<int>(rounded)] = 1.0;
    return {std::move(p), 0};
  }
  // Cells above z_hat use the upper tail so far-tail masses do not cancel.
  if (support_z == 0) {
    p[0] = 1.0;
    return {std::move(p), 0};
  }
  auto lower = [&](double x) { return normal_cdf((x - z) / params.sd_z); };
  auto upper = [&](double x) { return normal_cdf((z - x) / params.sd_z); };
  for (int k = 0; k <= support_z; ++k) {
    const double lo = k - 0.5, hi = k + 0.5;
    if (k == 0) {
      p[k] = lower(hi);
    } else if (k == support_z) {
      p[k] = upper(lo);
    } else if (lo >= z) {
      p[k] = upper(lo) - upper(hi);
    } else {
      p[k] = lower(hi) - lower(lo);
    }
  }
  return {std::move(p), 0};
}

ScoreMatrix zscore_table(const ZScoreParams& params, int support_y, int support_z) {
  ScoreMatrix table(support_y + 1, support_z + 1);
  for (int y = 0; y <= support_y; ++y) {
    const auto p = zscore_convert_pmf(y, params, support_z);
    std::copy(p.probs.begin(), p.probs.end(), table.row(y).begin());
  }
  return table;
}

}  // namespace harmonize
