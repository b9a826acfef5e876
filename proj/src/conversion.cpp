#include "harmonize/conversion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "harmonize/errors.hpp"
#include "harmonize/quadrature.hpp"

namespace harmonize {

PiecewiseLinearCDF::PiecewiseLinearCDF(std::span<const double> theta)
    : mass_(theta.begin(), theta.end()), cumulative_(theta.size() + 1, 0.0) {
  if (theta.empty()) throw std::invalid_argument("PiecewiseLinearCDF: no bins");
  double total = 0.0;
  for (std::size_t r = 0; r < theta.size(); ++r) {
    if (!(theta[r] >= 0.0)) throw std::invalid_argument("PiecewiseLinearCDF: negative mass");
    total += theta[r];
    cumulative_[r + 1] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("PiecewiseLinearCDF: zero total mass");
  for (double& c : cumulative_) c /= total;
  for (double& m : mass_) m /= total;
  cumulative_.back() = 1.0;
}

double PiecewiseLinearCDF::operator()(double q) const {
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  const int bins = this->bins();
  const double scaled = q * bins;
  const int b = std::min(static_cast<int>(scaled), bins - 1);
  return cumulative_[b] + (cumulative_[b + 1] - cumulative_[b]) * (scaled - b);
}

double PiecewiseLinearCDF::inverse(double u) const {
  if (u <= 0.0) return 0.0;
  const int bins = this->bins();
  if (u >= 1.0) {
    // Left end of the trailing flat segment, if any.
    int last = bins;
    while (last > 0 && cumulative_[last - 1] >= 1.0) --last;
    return static_cast<double>(last) / bins;
  }
  const auto it = std::lower_bound(cumulative_.begin() + 1, cumulative_.end(), u);
  const int r = static_cast<int>(it - cumulative_.begin());
  const int b = r - 1;
  const double width = cumulative_[r] - cumulative_[b];
  const double frac = width > 0.0 ? (u - cumulative_[b]) / width : 0.0;
  return (b + std::clamp(frac, 0.0, 1.0)) / bins;
}

PiecewiseLinearCDF build_cdf(const BinnedLatent& latent) { return PiecewiseLinearCDF(latent.theta); }

double inverse_cdf(const PiecewiseLinearCDF& cdf, double u) { return cdf.inverse(u); }

QuantileMap quantile_map(const BinnedLatent& source, const BinnedLatent& target) {
  return QuantileMap(build_cdf(source), build_cdf(target));
}

std::vector<double> posterior_gamma(int y, const BinnedLatent& latent, const DiscretizedModel& model) {
  if (model.order() != 1) throw std::invalid_argument("posterior_gamma: first-order model required");
  if (y < 0 || static_cast<std::size_t>(y) >= model.rows()) {
    throw DataError("posterior_gamma: score outside {0..N}");
  }
  if (latent.bins() != model.bins()) throw std::invalid_argument("posterior_gamma: bin count mismatch");
  const auto a = model.row(y);
  std::vector<double> w(a.size());
  double total = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    w[r] = a[r] * latent.theta[r];
    total += w[r];
  }
  if (!(total > 0.0)) {
    throw DegenerateModelError("posterior_gamma: score " + std::to_string(y) +
                               " has zero probability under the fitted model");
  }
  for (double& v : w) v /= total;
  return w;
}

ConversionBranch fit_branch(std::span<const ObservationRecord> records, const CovariateScheme& scheme,
                            DiscretizedModel discretized, double mu, const FitOptions& options) {
  ConversionBranch branch{std::move(discretized), {}};
  const int support = branch.model().support();
  branch.latents.reserve(scheme.size());
  for (std::size_t c = 0; c < scheme.size(); ++c) {
    branch.latents.push_back(fit(branch.discretized, scheme.distribution(records, c, support), mu, options));
  }
  return branch;
}

void ConversionModel::validate() const {
  if (source.latents.size() != scheme.size() || target.latents.size() != scheme.size()) {
    throw ConfigError("conversion model: both branches need one fitted latent per covariate cell");
  }
  for (const auto& l : source.latents) {
    if (l.bins() != source.discretized.bins()) throw ConfigError("conversion model: source bin mismatch");
  }
  for (const auto& l : target.latents) {
    if (l.bins() != target.discretized.bins()) throw ConfigError("conversion model: target bin mismatch");
  }
}

namespace {

// Bin-averaged target pmf: row r holds the within-bin quadrature average of
// p_{A_Z}(z | phi(gamma)) over the source bin r.
ScoreMatrix pushed_forward_kernel(const QuantileMap& phi, int bins, int nodes_per_bin,
                                  const MeasurementModel& target) {
  const GaussLegendre rule = gauss_legendre(nodes_per_bin);
  ScoreMatrix kernel(bins, target.categories());
  std::vector<double> p(target.categories());
  const double width = 1.0 / bins;
  for (int r = 0; r < bins; ++r) {
    auto row = kernel.row(r);
    for (int k = 0; k < nodes_per_bin; ++k) {
      const double gamma = std::clamp(r * width + 0.5 * width * (rule.nodes[k] + 1.0), 0.0, 1.0);
      target.pmf_into(std::clamp(phi(gamma), 0.0, 1.0), p);
      const double w = 0.5 * rule.weights[k];
      for (std::size_t z = 0; z < p.size(); ++z) row[z] += w * p[z];
    }
  }
  return kernel;
}

}  // namespace

ScoreMatrix conversion_table(const ConversionModel& model, std::size_t cell) {
  model.validate();
  if (cell >= model.scheme.size()) throw std::out_of_range("conversion_table: cell index");
  const BinnedLatent& src = model.source.latents[cell];
  const BinnedLatent& dst = model.target.latents[cell];
  const QuantileMap phi = quantile_map(src, dst);
  const DiscretizedModel& a = model.source.discretized;
  const int bins = a.bins();
  const ScoreMatrix kernel = pushed_forward_kernel(phi, bins, a.nodes_per_bin(), model.target.model());

  ScoreMatrix table(a.rows(), kernel.cols);
  std::vector<double> w(bins);
  for (std::size_t y = 0; y < a.rows(); ++y) {
    const auto row = a.row(y);
    double total = 0.0;
    for (int r = 0; r < bins; ++r) {
      w[r] = row[r] * src.theta[r];
      total += w[r];
    }
    // Rows of unreachable scores stay zero.
    if (!(total > 0.0)) continue;
    auto out = table.row(y);
    for (int r = 0; r < bins; ++r) {
      if (w[r] == 0.0) continue;
      const double wr = w[r] / total;
      const auto k = kernel.row(r);
      for (std::size_t z = 0; z < kernel.cols; ++z) out[z] += wr * k[z];
    }
  }
  return table;
}

ScoreDistribution convert_pmf(int y, std::size_t cell, const ConversionModel& model) {
  model.validate();
  const std::vector<double> w = posterior_gamma(y, model.source.latents.at(cell), model.source.discretized);
  const QuantileMap phi = quantile_map(model.source.latents[cell], model.target.latents[cell]);
  const int bins = model.source.discretized.bins();
  const int nodes = model.source.discretized.nodes_per_bin();
  const GaussLegendre rule = gauss_legendre(nodes);
  const MeasurementModel& target = model.target.model();
  std::vector<double> out(target.categories(), 0.0);
  std::vector<double> p(target.categories());
  const double width = 1.0 / bins;
  for (int r = 0; r < bins; ++r) {
    if (w[r] == 0.0) continue;
    for (int k = 0; k < nodes; ++k) {
      const double gamma = std::clamp(r * width + 0.5 * width * (rule.nodes[k] + 1.0), 0.0, 1.0);
      target.pmf_into(std::clamp(phi(gamma), 0.0, 1.0), p);
      const double weight = w[r] * 0.5 * rule.weights[k];
      for (std::size_t z = 0; z < p.size(); ++z) out[z] += weight * p[z];
    }
  }
  return ScoreDistribution::normalized(std::move(out));
}

std::vector<std::vector<int>> conversion_sample(std::span<const ObservationRecord> records,
                                                const ConversionModel& model, int draws, Rng& rng) {
  if (draws < 1) throw ConfigError("conversion_sample: J must be >= 1");
  model.validate();
  const int bins = model.source.discretized.bins();
  std::vector<QuantileMap> maps;
  for (std::size_t c = 0; c < model.scheme.size(); ++c) {
    maps.push_back(quantile_map(model.source.latents[c], model.target.latents[c]));
  }
  std::vector<std::vector<int>> out;
  out.reserve(records.size());
  std::vector<double> cum(bins);
  for (const auto& rec : records) {
    const std::size_t cell = model.scheme.assign(rec);
    const std::vector<double> w = posterior_gamma(rec.score, model.source.latents[cell], model.source.discretized);
    double total = 0.0;
    for (int r = 0; r < bins; ++r) {
      total += w[r];
      cum[r] = total;
    }
    std::vector<int> samples(draws);
    for (int j = 0; j < draws; ++j) {
      const double u = rng.uniform() * total;
      int r = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      r = std::min(r, bins - 1);
      while (w[r] == 0.0 && r > 0) --r;
      const double gamma = (r + rng.uniform()) / bins;
      const double zeta = std::clamp(maps[cell](gamma), 0.0, 1.0);
      samples[j] = model.target.model().sample(zeta, rng);
    }
    out.push_back(std::move(samples));
  }
  return out;
}

CrossEntropyResult sample_cross_entropy(std::span<const CrosswalkRecord> crosswalk,
                                        const std::vector<ScoreMatrix>& tables,
                                        const CovariateScheme& scheme) {
  CrossEntropyResult result;
  for (std::size_t i = 0; i < crosswalk.size(); ++i) {
    const auto& rec = crosswalk[i];
    const std::size_t cell = scheme.assign(rec.as_source_record());
    const ScoreMatrix& t = tables.at(cell);
    if (rec.y < 0 || static_cast<std::size_t>(rec.y) >= t.rows || rec.z < 0 ||
        static_cast<std::size_t>(rec.z) >= t.cols) {
      throw DataError("crosswalk record " + rec.subject_id + ": score out of range");
    }
    const double p = t(rec.y, rec.z);
    if (p > 0.0) {
      result.value -= std::log(p);
    } else {
      result.zero_probability.push_back(i);
    }
  }
  if (!result.zero_probability.empty()) result.value = std::numeric_limits<double>::infinity();
  return result;
}

CrossEntropyResult sample_cross_entropy(std::span<const CrosswalkRecord> crosswalk,
                                        const ConversionModel& model) {
  std::vector<ScoreMatrix> tables;
  for (std::size_t c = 0; c < model.scheme.size(); ++c) tables.push_back(conversion_table(model, c));
  return sample_cross_entropy(crosswalk, tables, model.scheme);
}

double population_cross_entropy(const ScoreMatrix& joint, const ScoreMatrix& conditional) {
  if (joint.rows != conditional.rows || joint.cols != conditional.cols) {
    throw std::invalid_argument("population_cross_entropy: dimension mismatch");
  }
  double ce = 0.0;
  for (std::size_t i = 0; i < joint.values.size(); ++i) {
    const double p0 = joint.values[i];
    if (p0 <= 0.0) continue;
    const double q = conditional.values[i];
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    ce -= p0 * std::log(q);
  }
  return ce;
}

std::vector<CrosswalkRecord> read_crosswalk_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("crosswalk CSV: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "subject_id,y,z,age,group") throw DataError("crosswalk CSV: header must be subject_id,y,z,age,group");
  std::vector<CrosswalkRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw DataError("crosswalk CSV line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      out.push_back({f[0], std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]), f[4]});
    } catch (const std::logic_error&) {
      throw DataError("crosswalk CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::vector<CrosswalkRecord> read_crosswalk_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open crosswalk file: " + path);
  return read_crosswalk_csv(in);
}

void write_crosswalk_csv(std::ostream& out, std::span<const CrosswalkRecord> records) {
  out << "subject_id,y,z,age,group\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << r.y << ',' << r.z << ',' << r.age << ',' << r.group << '\n';
  }
}

}  // namespace harmonize
