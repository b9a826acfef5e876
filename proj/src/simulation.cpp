#include "harmonize/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "harmonize/errors.hpp"
#include "harmonize/quadrature.hpp"
#include "harmonize/special.hpp"

namespace harmonize {
namespace {

constexpr int kJointNodes = 8;

std::string subject_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06zu", prefix, i);
  return buf;
}

BranchConfig branch_from_json(const nlohmann::json& j, BranchConfig base) {
  if (j.contains("a")) base.a = j.at("a").get<double>();
  if (j.contains("b")) base.b = j.at("b").get<double>();
  if (j.contains("model")) base.model = MeasurementModel::from_json(j.at("model"));
  if (j.contains("test_id")) base.test_id = j.at("test_id").get<std::string>();
  return base;
}

nlohmann::json branch_to_json(const BranchConfig& b) {
  return {{"a", b.a}, {"b", b.b}, {"model", b.model.to_json()}, {"test_id", b.test_id}};
}

}  // namespace

void SimulationConfig::validate() const {
  for (const auto* b : {&y, &z}) {
    if (!(b->a > 0.0 && b->b > 0.0)) throw ConfigError("Beta parameters must be positive");
  }
  if (n < 1) throw ConfigError("simulation needs n >= 1");
  if (n2 > n) throw ConfigError("n2 cannot exceed n");
  if (y.test_id == z.test_id) throw ConfigError("branches need distinct test ids");
}

nlohmann::json SimulationConfig::to_json() const {
  return {{"y", branch_to_json(y)}, {"z", branch_to_json(z)}, {"n", n},
          {"n2", n2},               {"crosswalk_n", crosswalk_n}, {"seed", seed}};
}

SimulationConfig SimulationConfig::from_json(const nlohmann::json& j, SimulationConfig base) {
  try {
    if (j.contains("y")) base.y = branch_from_json(j.at("y"), base.y);
    if (j.contains("z")) base.z = branch_from_json(j.at("z"), base.z);
    if (j.contains("n")) base.n = j.at("n").get<std::size_t>();
    if (j.contains("n2")) base.n2 = j.at("n2").get<std::size_t>();
    if (j.contains("crosswalk_n")) base.crosswalk_n = j.at("crosswalk_n").get<std::size_t>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
  base.validate();
  return base;
}

SimulationConfig SimulationConfig::from_json(const nlohmann::json& j) { return from_json(j, SimulationConfig{}); }

double beta_quantile(double u, double a, double b) {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("beta_quantile needs u in [0, 1]");
  if (!(a > 0.0 && b > 0.0)) throw std::domain_error("beta_quantile needs a, b > 0");
  return special::beta_inc_inv(u, a, b);
}

SimulatedData simulate_harmonizable(const SimulationConfig& config) {
  config.validate();
  SimulatedData out;
  out.y_pairs.support = config.y.model.support();
  out.z_pairs.support = config.z.model.support();
  const std::size_t total = config.n + config.crosswalk_n;
  out.omega.resize(total);
  out.gamma.resize(total);
  out.zeta.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng = Rng::stream(config.seed, i);
    const double w = rng.uniform_open();
    const double g = beta_quantile(w, config.y.a, config.y.b);
    const double z = beta_quantile(w, config.z.a, config.z.b);
    out.omega[i] = w;
    out.gamma[i] = g;
    out.zeta[i] = z;
    const int y1 = sample_score(config.y.model, g, rng);
    const int z1 = sample_score(config.z.model, z, rng);
    // Second visits are always drawn so the stream layout does not depend on n2.
    const int y2 = sample_score(config.y.model, g, rng);
    const int z2 = sample_score(config.z.model, z, rng);
    if (i < config.n) {
      const std::string id = subject_id('S', i);
      out.y_records.push_back({id, 1, config.y.test_id, y1, 0.0, "all"});
      out.z_records.push_back({id, 1, config.z.test_id, z1, 0.0, "all"});
      if (i < config.n2) {
        out.y_records.push_back({id, 2, config.y.test_id, y2, 0.0, "all"});
        out.z_records.push_back({id, 2, config.z.test_id, z2, 0.0, "all"});
        out.y_pairs.pairs.push_back({id, y1, y2, 0.0, "all"});
        out.z_pairs.pairs.push_back({id, z1, z2, 0.0, "all"});
      }
    } else {
      out.crosswalk.push_back({subject_id('C', i - config.n), y1, z1, 0.0, "all"});
    }
  }
  return out;
}

ScoreMatrix true_joint(const SimulationConfig& config, int grid_size) {
  config.validate();
  if (grid_size < kJointNodes) throw ConfigError("true_joint grid is too small");
  const auto& ym = config.y.model;
  const auto& zm = config.z.model;
  const double a = config.y.a, b = config.y.b;

  // Breakpoints in gamma: kinks of p_AY and the images of the kinks of p_AZ.
  std::vector<double> breaks = {0.0, 1.0};
  for (double g : kink_points(ym)) breaks.push_back(g);
  for (double zk : kink_points(zm)) {
    breaks.push_back(beta_quantile(special::beta_inc(zk, config.z.a, config.z.b), a, b));
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double x, double y) { return std::fabs(x - y) < 1e-15; }),
               breaks.end());

  const int panels = std::max<int>(grid_size / kJointNodes, static_cast<int>(breaks.size()));
  const GaussLegendre base = gauss_legendre(kJointNodes);
  ScoreMatrix joint(ym.support() + 1, zm.support() + 1);
  std::vector<double> py(ym.support() + 1), pz(zm.support() + 1);
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double lo = breaks[s], hi = breaks[s + 1];
    const int k = std::max(1, static_cast<int>(std::lround(panels * (hi - lo))));
    const double width = (hi - lo) / k;
    for (int p = 0; p < k; ++p) {
      const double mid = lo + (p + 0.5) * width;
      for (int q = 0; q < kJointNodes; ++q) {
        const double g = mid + 0.5 * width * base.nodes[q];
        const double f = special::beta_pdf(g, a, b);
        if (!(f > 0.0)) continue;
        const double w = 0.5 * width * base.weights[q] * f;
        const double zeta = beta_quantile(special::beta_inc(g, a, b), config.z.a, config.z.b);
        ym.pmf_into(g, py);
        zm.pmf_into(zeta, pz);
        for (int y = 0; y <= ym.support(); ++y) {
          const double wy = w * py[y];
          if (wy == 0.0) continue;
          auto row = joint.row(y);
          for (int z = 0; z <= zm.support(); ++z) row[z] += wy * pz[z];
        }
      }
    }
  }
  double total = 0.0;
  for (double v : joint.values) total += v;
  for (double& v : joint.values) v /= total;
  return joint;
}

std::vector<double> true_marginal_y(const SimulationConfig& config, int grid_size) {
  const ScoreMatrix joint = true_joint(config, grid_size);
  std::vector<double> p(joint.rows, 0.0);
  for (std::size_t y = 0; y < joint.rows; ++y) {
    for (double v : joint.row(y)) p[y] += v;
  }
  return p;
}

ScoreMatrix conditional_from_joint(const ScoreMatrix& joint) {
  ScoreMatrix out(joint.rows, joint.cols);
  for (std::size_t y = 0; y < joint.rows; ++y) {
    double total = 0.0;
    for (double v : joint.row(y)) total += v;
    if (!(total > 0.0)) continue;
    for (std::size_t z = 0; z < joint.cols; ++z) out(y, z) = joint(y, z) / total;
  }
  return out;
}

}  // namespace harmonize
