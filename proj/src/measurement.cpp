#include "harmonize/measurement.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "harmonize/errors.hpp"
#include "harmonize/quadrature.hpp"

namespace harmonize {

std::string to_string(Family family) {
  switch (family) {
    case Family::Gaussian: return "gaussian";
    case Family::Laplace: return "laplace";
    case Family::Epanechnikov: return "epanechnikov";
    case Family::Triangular: return "triangular";
    case Family::Binomial: return "binomial";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "gaussian") return Family::Gaussian;
  if (lower == "laplace") return Family::Laplace;
  if (lower == "epanechnikov") return Family::Epanechnikov;
  if (lower == "triangular") return Family::Triangular;
  if (lower == "binomial") return Family::Binomial;
  throw ConfigError("unknown measurement family: " + name);
}

MeasurementModel::MeasurementModel(Family family, double bandwidth, int support)
    : family_(family), bandwidth_(family == Family::Binomial ? 0.0 : bandwidth), support_(support) {
  if (support < 1) throw ConfigError("measurement model: support N must be >= 1");
  if (family != Family::Binomial && !(bandwidth > 0.0 && std::isfinite(bandwidth))) {
    throw ConfigError("measurement model: bandwidth must be positive and finite");
  }
}

void MeasurementModel::pmf_into(double gamma, std::span<double> out) const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::domain_error("pmf: gamma outside [0, 1]");
  const int n = support_;
  if (family_ == Family::Binomial) {
    if (gamma == 0.0 || gamma == 1.0) {
      std::fill(out.begin(), out.end(), 0.0);
      out[gamma == 0.0 ? 0 : n] = 1.0;
      return;
    }
    const double lg = std::log(gamma);
    const double l1g = std::log1p(-gamma);
    const double lgn = std::lgamma(n + 1.0);
    for (int y = 0; y <= n; ++y) {
      out[y] = std::exp(lgn - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0) + y * lg + (n - y) * l1g);
    }
    return;
  }

  const double center = n * gamma;
  const double h = bandwidth_;
  double total = 0.0;
  switch (family_) {
    case Family::Gaussian:
    case Family::Laplace: {
      // Log-domain with the nearest-integer term pinned at 1 to avoid underflow
      // for small bandwidths.
      const double nearest = std::clamp(std::round(center), 0.0, static_cast<double>(n));
      auto log_k = [&](double y) {
        const double u = (y - center) / h;
        return family_ == Family::Gaussian ? -0.5 * u * u : -std::fabs(u);
      };
      const double ref = log_k(nearest);
      for (int y = 0; y <= n; ++y) {
        out[y] = std::exp(log_k(y) - ref);
        total += out[y];
      }
      break;
    }
    case Family::Epanechnikov:
    case Family::Triangular: {
      for (int y = 0; y <= n; ++y) {
        const double u = (y - center) / h;
        const double k = family_ == Family::Epanechnikov ? 1.0 - u * u : 1.0 - std::fabs(u);
        out[y] = k > 0.0 ? k : 0.0;
        total += out[y];
      }
      if (total == 0.0) {
        out[static_cast<int>(std::clamp(std::round(center), 0.0, static_cast<double>(n)))] = 1.0;
        return;
      }
      break;
    }
    case Family::Binomial:
      break;
  }
  const double inv = 1.0 / total;
  for (int y = 0; y <= n; ++y) out[y] *= inv;
}

std::vector<double> MeasurementModel::pmf(double gamma) const {
  std::vector<double> out(categories());
  pmf_into(gamma, out);
  return out;
}

int MeasurementModel::sample(double gamma, Rng& rng) const {
  const std::vector<double> p = pmf(gamma);
  const double u = rng.uniform();
  double cum = 0.0;
  for (int y = 0; y < static_cast<int>(p.size()); ++y) {
    cum += p[y];
    if (u < cum) return y;
  }
  // Rounding left a sliver above the last cumulative value.
  for (int y = static_cast<int>(p.size()) - 1; y >= 0; --y) {
    if (p[y] > 0.0) return y;
  }
  return support_;
}

std::string MeasurementModel::label() const {
  if (family_ == Family::Binomial) return "binomial";
  std::ostringstream os;
  os << to_string(family_) << "(h=" << bandwidth_ << ")";
  return os.str();
}

nlohmann::json MeasurementModel::to_json() const {
  nlohmann::json j{{"family", to_string(family_)}, {"N", support_}};
  if (family_ != Family::Binomial) j["h"] = bandwidth_;
  return j;
}

MeasurementModel MeasurementModel::from_json(const nlohmann::json& j) {
  try {
    const Family family = family_from_string(j.at("family").get<std::string>());
    const int n = j.at("N").get<int>();
    if (family == Family::Binomial) return binomial(n);
    return kernel(family, j.at("h").get<double>(), n);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("measurement model descriptor: ") + e.what());
  }
}

std::vector<double> pmf(const MeasurementModel& model, double gamma) { return model.pmf(gamma); }

int sample_score(const MeasurementModel& model, double gamma, Rng& rng) {
  return model.sample(gamma, rng);
}

DiscretizedModel::DiscretizedModel(MeasurementModel model, int order, int bins, int nodes_per_bin,
                                   std::vector<double> entries)
    : model_(model), order_(order), bins_(bins), nodes_per_bin_(nodes_per_bin), entries_(std::move(entries)) {
  rows_ = 1;
  for (int k = 0; k < order; ++k) rows_ *= static_cast<std::size_t>(model_.categories());
  if (entries_.size() != rows_ * static_cast<std::size_t>(bins_)) {
    throw std::invalid_argument("DiscretizedModel: entry count does not match shape");
  }
}

double DiscretizedModel::column_sum(std::size_t bin) const {
  double s = 0.0;
  for (std::size_t r = 0; r < rows_; ++r) s += (*this)(r, bin);
  return s;
}

DiscretizedModel discretize_order(const MeasurementModel& model, int order, int bins, int nodes_per_bin) {
  if (bins < 1) throw ConfigError("discretize: bins must be >= 1");
  if (nodes_per_bin < 1) throw ConfigError("discretize: nodes_per_bin must be >= 1");
  if (order < 1) throw ConfigError("discretize: order must be >= 1");
  const std::size_t cats = model.categories();
  std::size_t rows = 1;
  for (int k = 0; k < order; ++k) rows *= cats;

  const GaussLegendre rule = gauss_legendre(nodes_per_bin);
  std::vector<double> entries(rows * bins, 0.0);
  std::vector<double> p(cats);
  std::vector<double> product(rows);
  const double width = 1.0 / bins;
  for (int r = 0; r < bins; ++r) {
    const double lo = r * width;
    for (int k = 0; k < nodes_per_bin; ++k) {
      const double gamma = std::clamp(lo + 0.5 * width * (rule.nodes[k] + 1.0), 0.0, 1.0);
      const double weight = 0.5 * width * rule.weights[k];
      model.pmf_into(gamma, p);
      if (order == 1) {
        for (std::size_t y = 0; y < cats; ++y) entries[y * bins + r] += weight * p[y];
        continue;
      }
      // Expand the k-fold outer product, first index slowest.
      product[0] = 1.0;
      std::size_t filled = 1;
      for (int o = 0; o < order; ++o) {
        for (std::size_t i = filled; i-- > 0;) {
          const double base = product[i];
          for (std::size_t y = 0; y < cats; ++y) product[i * cats + y] = base * p[y];
        }
        filled *= cats;
      }
      for (std::size_t row = 0; row < rows; ++row) entries[row * bins + r] += weight * product[row];
    }
  }
  // Entries this small carry no probability at double precision but slow every
  // product they enter.
  for (double& e : entries) {
    if (e < 1e-300) e = 0.0;
  }
  return DiscretizedModel(model, order, bins, nodes_per_bin, std::move(entries));
}

DiscretizedModel discretize(const MeasurementModel& model, int bins, int nodes_per_bin) {
  return discretize_order(model, 1, bins, nodes_per_bin);
}

SecondOrderModel discretize_second_order(const MeasurementModel& model, int bins, int nodes_per_bin) {
  return discretize_order(model, 2, bins, nodes_per_bin);
}

std::vector<double> kink_points(const MeasurementModel& m) {
  std::vector<double> offsets;
  switch (m.family()) {
    case Family::Laplace:
      offsets = {0.0};
      break;
    case Family::Triangular:
      offsets = {-m.bandwidth(), 0.0, m.bandwidth()};
      break;
    case Family::Epanechnikov:
      offsets = {-m.bandwidth(), m.bandwidth()};
      break;
    default:
      return {};
  }
  std::vector<double> out;
  const double n = m.support();
  for (int y = 0; y <= m.support(); ++y) {
    for (double o : offsets) {
      const double g = (y + o) / n;
      if (g > 0.0 && g < 1.0) out.push_back(g);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace harmonize
