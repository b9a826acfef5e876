#include <cmath>
#include <sstream>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include "doctest.h"
#include "harmonize/conversion.hpp"
#include "harmonize/errors.hpp"
#include "oracles.hpp"

using namespace harmonize;

namespace {

BinnedLatent latent(std::vector<double> theta) {
  BinnedLatent b;
  b.theta = std::move(theta);
  return b;
}

// Bin masses of a Beta(a, b) law.
std::vector<double> beta_bins(double a, double b, int bins) {
  boost::math::beta_distribution<double> d(a, b);
  std::vector<double> t(bins);
  for (int r = 0; r < bins; ++r) t[r] = boost::math::cdf(d, (r + 1.0) / bins) - boost::math::cdf(d, double(r) / bins);
  return t;
}

// Piecewise-linear CDF and its inverse by bisection, written from scratch.
double pl_cdf(const std::vector<double>& t, double q) {
  const int bins = static_cast<int>(t.size());
  double acc = 0.0;
  for (int r = 0; r < bins; ++r) {
    const double lo = double(r) / bins, hi = double(r + 1) / bins;
    if (q >= hi) {
      acc += t[r];
    } else {
      if (q > lo) acc += t[r] * (q - lo) * bins;
      break;
    }
  }
  return acc;
}

double pl_inverse(const std::vector<double>& t, double u) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (pl_cdf(t, mid) >= u ? hi : lo) = mid;
  }
  return hi;
}

ConversionModel make_model(const MeasurementModel& ym, const std::vector<double>& ty, const MeasurementModel& zm,
                           const std::vector<double>& tz, int nodes = kDefaultNodesPerBin) {
  const int bins = static_cast<int>(ty.size());
  return {{discretize(ym, bins, nodes), {latent(ty)}}, {discretize(zm, bins, nodes), {latent(tz)}}, {}};
}

}  // namespace

TEST_SUITE("conversion") {

TEST_CASE("build_cdf examples") {
  const PiecewiseLinearCDF u = build_cdf(BinnedLatent::uniform(10));
  for (double q = 0.0; q <= 1.0; q += 0.01) CHECK(u(q) == doctest::Approx(q).epsilon(1e-14));
  const PiecewiseLinearCDF f = build_cdf(latent({1.0, 0.0}));
  for (double q = 0.0; q <= 1.0; q += 0.05) CHECK(f(q) == doctest::Approx(std::min(2 * q, 1.0)).epsilon(1e-14));
  Rng rng(1);
  const PiecewiseLinearCDF r = build_cdf(latent(oracle::random_simplex(37, rng)));
  CHECK(r(1.0) == 1.0);
  CHECK(r.knots().back() == 1.0);
  CHECK(r.knots().front() == 0.0);
}

TEST_CASE("generalized inverse") {
  const PiecewiseLinearCDF u = build_cdf(BinnedLatent::uniform(8));
  for (double q = 0.0; q <= 1.0; q += 0.01) CHECK(inverse_cdf(u, q) == doctest::Approx(q).epsilon(1e-14));
  const PiecewiseLinearCDF f = build_cdf(latent({0.0, 1.0}));
  CHECK(inverse_cdf(f, 1e-15) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(inverse_cdf(build_cdf(latent({0.5, 0.0, 0.5})), 0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Rng rng(3);
  auto t = oracle::random_simplex(25, rng);
  t[3] = t[4] = t[20] = 0.0;
  const PiecewiseLinearCDF g = build_cdf(latent(t));
  for (double v = 0.0; v <= 1.0; v += 0.001) {
    CHECK(g(inverse_cdf(g, v)) >= v - 1e-14);
    CHECK(inverse_cdf(g, g(v)) <= v + 1e-14);
  }
}

TEST_CASE("quantile map") {
  Rng rng(5);
  const auto t = oracle::random_simplex(50, rng);
  const QuantileMap id = quantile_map(latent(t), latent(t));
  for (int i = 0; i <= 1000; ++i) CHECK(std::fabs(id(i / 1000.0) - i / 1000.0) <= 1e-12);

  const auto s = oracle::random_simplex(50, rng);
  const QuantileMap fwd = quantile_map(latent(t), latent(s));
  const QuantileMap back = quantile_map(latent(s), latent(t));
  double prev = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double q = i / 1000.0;
    CHECK(std::fabs(back(fwd(q)) - q) <= 2.0 / 50);
    CHECK(fwd(q) >= prev);
    prev = fwd(q);
  }
  CHECK(fwd(0.0) == 0.0);
  CHECK(fwd(1.0) == doctest::Approx(1.0));

  // Beta(12, 5) to Beta(6, 6) against the analytic composition.
  const int bins = 1000;
  const QuantileMap phi = quantile_map(latent(beta_bins(12, 5, bins)), latent(beta_bins(6, 6, bins)));
  boost::math::beta_distribution<double> f(12, 5), g(6, 6);
  double sup = 0.0;
  for (int i = 1; i < 1000; ++i) {
    const double q = i / 1000.0;
    sup = std::max(sup, std::fabs(phi(q) - boost::math::quantile(g, boost::math::cdf(f, q))));
  }
  CHECK(sup <= 5e-3);
}

TEST_CASE("posterior over bins") {
  const DiscretizedModel d = discretize(MeasurementModel::binomial(1), 2);
  const auto w = posterior_gamma(1, BinnedLatent::uniform(2), d);
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-14));

  // Flat rows return the prior.
  const DiscretizedModel flat = discretize(MeasurementModel::kernel(Family::Gaussian, 1e9, 4), 20);
  Rng rng(7);
  const auto t = oracle::random_simplex(20, rng);
  const auto p = posterior_gamma(2, latent(t), flat);
  for (int r = 0; r < 20; ++r) CHECK(std::fabs(p[r] - t[r]) < 1e-9);

  for (int i = 0; i < 50; ++i) {
    const DiscretizedModel g = discretize(MeasurementModel::kernel(Family::Laplace, 0.5 + rng.uniform(), 6), 30);
    const auto post = posterior_gamma(i % 7, latent(oracle::random_simplex(30, rng)), g);
    double s = 0.0;
    for (double v : post) s += v;
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }

  const DiscretizedModel e = discretize(MeasurementModel::kernel(Family::Epanechnikov, 1.0, 4), 4);
  CHECK_THROWS_AS(posterior_gamma(4, latent({1, 0, 0, 0}), e), DegenerateModelError);
}

TEST_CASE("convert_pmf examples") {
  const MeasurementModel sharp = MeasurementModel::kernel(Family::Gaussian, 0.05, 10);
  const auto t = beta_bins(3, 3, 200);
  const ConversionModel same = make_model(sharp, t, sharp, t);
  for (int y = 0; y <= 10; ++y) {
    const auto p = convert_pmf(y, 0, same);
    CHECK(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin() == y);
  }
  const ConversionModel flat = make_model(sharp, t, MeasurementModel::kernel(Family::Gaussian, 1e9, 6), t);
  for (double v : convert_pmf(4, 0, flat).probs) CHECK(v == doctest::Approx(1.0 / 7).epsilon(1e-9));
}

TEST_CASE("convert_pmf matches brute-force sums") {
  Rng rng(9);
  const int bins = 10;
  const auto ty = oracle::random_simplex(bins, rng);
  const auto tz = oracle::random_simplex(bins, rng);
  const ConversionModel m = make_model(MeasurementModel::kernel(Family::Gaussian, 0.8, 3), ty,
                                       MeasurementModel::kernel(Family::Laplace, 0.6, 3), tz);
  using gl = boost::math::quadrature::gauss<double, 5>;
  // Boost stores the nonnegative half of the symmetric rule.
  std::vector<double> nodes, weights;
  for (std::size_t i = 0; i < gl::abscissa().size(); ++i) {
    const double x = gl::abscissa()[i], w = gl::weights()[i];
    nodes.push_back(x);
    weights.push_back(w);
    if (x != 0.0) {
      nodes.push_back(-x);
      weights.push_back(w);
    }
  }
  const auto ay = oracle::bin_matrix([](double g) { return oracle::kernel_pmf("gaussian", 0.8, 3, g); }, 4, bins);
  for (int y = 0; y <= 3; ++y) {
    std::vector<double> w(bins);
    double total = 0.0;
    for (int r = 0; r < bins; ++r) total += (w[r] = ay[y][r] * ty[r]);
    std::vector<double> expect(4, 0.0);
    for (int r = 0; r < bins; ++r) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double g = (r + 0.5 * (nodes[k] + 1.0)) / bins;
        const double zeta = pl_inverse(tz, pl_cdf(ty, g));
        const auto pz = oracle::kernel_pmf("laplace", 0.6, 3, zeta);
        for (int z = 0; z <= 3; ++z) expect[z] += w[r] / total * 0.5 * weights[k] * pz[z];
      }
    }
    const auto got = convert_pmf(y, 0, m);
    for (int z = 0; z <= 3; ++z) CHECK(std::fabs(got[z] - expect[z]) <= 1e-10);
    const ScoreMatrix table = conversion_table(m, 0);
    double s = 0.0;
    for (int z = 0; z <= 3; ++z) {
      CHECK(std::fabs(table(y, z) - got[z]) <= 1e-12);
      s += table(y, z);
    }
    CHECK(std::fabs(s - 1.0) <= 1e-10);
  }
}

TEST_CASE("conversion sampler follows convert_pmf") {
  Rng rng(11);
  const int bins = 50;
  const ConversionModel m = make_model(MeasurementModel::kernel(Family::Gaussian, 1.0, 6), beta_bins(5, 2, bins),
                                       MeasurementModel::kernel(Family::Laplace, 1.0, 8), beta_bins(3, 3, bins), 20);
  const std::vector<ObservationRecord> recs = {{"a", 1, "Y", 4, 0.0, "all"}};
  const auto draws = conversion_sample(recs, m, 100000, rng);
  std::vector<double> counts(9, 0.0);
  for (int z : draws[0]) counts[z] += 1.0;
  const auto p = convert_pmf(4, 0, m);
  // Pearson goodness of fit; the chi-square 0.001 quantile at 8 df is 26.12.
  double x2 = 0.0;
  for (int z = 0; z <= 8; ++z) x2 += std::pow(counts[z] - 1e5 * p[z], 2) / (1e5 * p[z]);
  CHECK(x2 < 26.12);

  // A single bin and sharp kernels: the draw is a fixed function of the seed.
  const ConversionModel one = make_model(MeasurementModel::kernel(Family::Gaussian, 1e-3, 2), {1.0},
                                         MeasurementModel::kernel(Family::Gaussian, 1e-3, 2), {1.0});
  const std::vector<ObservationRecord> single = {{"a", 1, "Y", 1, 0.0, "all"}};
  Rng a(1), b(1);
  const auto da = conversion_sample(single, one, 1, a);
  CHECK(da[0].size() == 1);
  CHECK(da == conversion_sample(single, one, 1, b));

  const MeasurementModel sharp = MeasurementModel::kernel(Family::Gaussian, 0.05, 10);
  const ConversionModel same = make_model(sharp, beta_bins(2, 2, 200), sharp, beta_bins(2, 2, 200));
  const auto near = conversion_sample(std::vector<ObservationRecord>{{"b", 1, "Y", 7, 0, "all"}}, same, 1000, rng);
  for (int z : near[0]) CHECK(std::abs(z - 7) <= 1);
  CHECK_THROWS_AS(conversion_sample(recs, m, 0, rng), ConfigError);
}

TEST_CASE("cross entropies") {
  const ScoreMatrix point = [] {
    ScoreMatrix t(3, 3);
    for (int i = 0; i < 3; ++i) t(i, (i + 1) % 3) = 1.0;
    return t;
  }();
  const std::vector<CrosswalkRecord> cw = {{"a", 0, 1, 0, "all"}, {"b", 2, 0, 0, "all"}, {"c", 1, 2, 0, "all"}};
  CHECK(sample_cross_entropy(cw, {point}, {}).value == 0.0);
  ScoreMatrix uniform(3, 3);
  for (double& v : uniform.values) v = 1.0 / 3.0;
  CHECK(sample_cross_entropy(cw, {uniform}, {}).value == doctest::Approx(3 * std::log(3.0)).epsilon(1e-14));
  const std::vector<CrosswalkRecord> miss = {{"a", 0, 2, 0, "all"}, {"b", 2, 0, 0, "all"}};
  const auto inf = sample_cross_entropy(miss, {point}, {});
  CHECK(std::isinf(inf.value));
  CHECK(inf.zero_probability == std::vector<std::size_t>{0});

  // Against direct recomputation from convert_pmf.
  Rng rng(13);
  const ConversionModel m = make_model(MeasurementModel::kernel(Family::Gaussian, 1.0, 6), beta_bins(4, 2, 40),
                                       MeasurementModel::kernel(Family::Laplace, 1.0, 5), beta_bins(2, 2, 40));
  std::vector<CrosswalkRecord> sim;
  double expect = 0.0;
  for (int i = 0; i < 40; ++i) {
    const int y = static_cast<int>(rng.uniform() * 7), z = static_cast<int>(rng.uniform() * 6);
    sim.push_back({"s" + std::to_string(i), y, z, 0.0, "all"});
    expect -= std::log(convert_pmf(y, 0, m)[z]);
  }
  CHECK(sample_cross_entropy(sim, m).value == doctest::Approx(expect).epsilon(1e-12));

  // Population cross entropy is minimized by the truth's own conditional.
  ScoreMatrix joint(3, 3);
  const double j[] = {0.2, 0.05, 0.05, 0.1, 0.2, 0.1, 0.0, 0.1, 0.2};
  for (int i = 0; i < 9; ++i) joint.values[i] = j[i];
  ScoreMatrix cond(3, 3);
  double h = 0.0;
  for (int y = 0; y < 3; ++y) {
    double row = 0.0;
    for (int z = 0; z < 3; ++z) row += joint(y, z);
    for (int z = 0; z < 3; ++z) {
      cond(y, z) = joint(y, z) / row;
      if (joint(y, z) > 0) h -= joint(y, z) * std::log(cond(y, z));
    }
  }
  CHECK(population_cross_entropy(joint, cond) == doctest::Approx(h).epsilon(1e-14));
  for (int i = 0; i < 100; ++i) {
    ScoreMatrix other(3, 3);
    for (int y = 0; y < 3; ++y) {
      const auto r = oracle::random_simplex(3, rng);
      for (int z = 0; z < 3; ++z) other(y, z) = r[z];
    }
    CHECK(population_cross_entropy(joint, other) >= h - 1e-12);
  }
  CHECK(std::isinf(population_cross_entropy(joint, point)));
}

TEST_CASE("fit_branch and model validation") {
  std::vector<ObservationRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back({"s" + std::to_string(i), 1, "Y", i % 7, 60.0 + i, i % 2 ? "a" : "b"});
  const CovariateScheme scheme = CovariateScheme::grid({"a", "b"}, {65.0, 80.0}, 10.0);
  const MeasurementModel m = MeasurementModel::kernel(Family::Gaussian, 1.0, 6);
  const ConversionBranch br = fit_branch(recs, scheme, discretize(m, 40), 0.01);
  CHECK(br.latents.size() == 4);
  ConversionModel cm{br, br, scheme};
  CHECK_NOTHROW(cm.validate());
  for (std::size_t c = 0; c < 4; ++c) {
    const ScoreMatrix t = conversion_table(cm, c);
    for (int y = 0; y <= 6; ++y) {
      double s = 0.0;
      for (double v : t.row(y)) s += v;
      CHECK(std::fabs(s - 1.0) <= 1e-10);
    }
  }
  cm.target.latents.pop_back();
  CHECK_THROWS_AS(cm.validate(), ConfigError);
}

TEST_CASE("crosswalk CSV") {
  const std::vector<CrosswalkRecord> cw = {{"c1", 3, 4, 70.5, "f"}};
  std::stringstream ss;
  write_crosswalk_csv(ss, cw);
  const auto back = read_crosswalk_csv(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].y == 3);
  CHECK(back[0].z == 4);
  CHECK(back[0].age == 70.5);
  std::stringstream bad("subject_id,y,z\n");
  CHECK_THROWS_AS(read_crosswalk_csv(bad), DataError);
}

}
