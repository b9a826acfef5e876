#include <cmath>

#include "doctest.h"
#include "harmonize/errors.hpp"
#include "harmonize/measurement.hpp"
#include "harmonize/solver.hpp"
#include "oracles.hpp"

using namespace harmonize;

namespace {

std::vector<std::vector<double>> as_rows(const DiscretizedModel& d) {
  std::vector<std::vector<double>> a(d.rows());
  for (std::size_t y = 0; y < d.rows(); ++y) a[y].assign(d.row(y).begin(), d.row(y).end());
  return a;
}

ScoreDistribution dist(std::vector<double> p) { return ScoreDistribution::normalized(std::move(p)); }

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("regularized_loglik examples") {
  const DiscretizedModel d = discretize(MeasurementModel::binomial(1), 2);
  const std::vector<double> u = {0.5, 0.5};
  CHECK(regularized_loglik(u, d, dist({0.5, 0.5}), 0.0) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(regularized_loglik(u, d, dist({0.5, 0.5}), 0.3) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  const std::vector<double> z = {1.0, 0.0};
  CHECK(std::isinf(regularized_loglik(z, d, dist({0.5, 0.5}), 0.1)));
  CHECK_THROWS_AS(regularized_loglik(std::vector<double>{1.0}, d, dist({0.5, 0.5}), 0.0), std::invalid_argument);

  const DiscretizedModel e = discretize(MeasurementModel::kernel(Family::Epanechnikov, 1.0, 4), 4);
  const std::vector<double> left = {1.0, 0.0, 0.0, 0.0};
  CHECK(std::isinf(regularized_loglik(left, e, dist({0, 0, 0, 0, 1}), 0.0)));
}

TEST_CASE("em_step examples") {
  const DiscretizedModel d = discretize(MeasurementModel::binomial(1), 2);
  const auto t = em_step(std::vector<double>{0.5, 0.5}, d, dist({1.0, 0.0}), 0.0);
  CHECK(t[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(t[1] == doctest::Approx(0.25).epsilon(1e-14));

  // Fixed point at the implied marginal.
  const DiscretizedModel g = discretize(MeasurementModel::kernel(Family::Gaussian, 1.0, 6), 30);
  Rng rng(2);
  const auto theta = oracle::random_simplex(30, rng);
  const auto same = em_step(theta, g, implied_marginal(theta, g), 0.0);
  for (int r = 0; r < 30; ++r) CHECK(std::fabs(same[r] - theta[r]) < 1e-14);

  const auto big = em_step(theta, g, dist({1, 2, 3, 4, 3, 2, 1}), 1e12);
  for (double v : big) CHECK(v == doctest::Approx(1.0 / 30).epsilon(1e-9));

  const DiscretizedModel e = discretize(MeasurementModel::kernel(Family::Epanechnikov, 1.0, 4), 4);
  CHECK_THROWS_AS(em_step(std::vector<double>{1.0, 0.0, 0.0, 0.0}, e, dist({0, 0, 0, 0, 1}), 0.0),
                  DegenerateModelError);
}

TEST_CASE("em_step monotonicity, simplex and lower bound on random instances") {
  Rng rng(17);
  const Family fams[] = {Family::Gaussian, Family::Laplace, Family::Binomial};
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.uniform() * 10);
    const int bins = 1 + static_cast<int>(rng.uniform() * 100);
    const Family f = fams[i % 3];
    const MeasurementModel m = f == Family::Binomial ? MeasurementModel::binomial(n)
                                                     : MeasurementModel::kernel(f, 0.2 + 4.0 * rng.uniform(), n);
    const DiscretizedModel d = discretize(m, bins);
    const double mu = i % 4 == 0 ? 0.0 : std::pow(10.0, -3.0 + 3.0 * rng.uniform());
    const ScoreDistribution p{oracle::random_simplex(n + 1, rng), 0};
    const auto theta = oracle::random_simplex(bins, rng);
    const auto next = em_step(theta, d, p, mu);
    double s = 0.0;
    for (double v : next) s += v;
    CHECK(std::fabs(s - 1.0) <= 1e-12);
    CHECK(regularized_loglik(next, d, p, mu) >= regularized_loglik(theta, d, p, mu) - 1e-12);
    const double lb = mu / ((1.0 + mu) * bins);
    for (double v : next) CHECK(v >= lb);
  }
}

TEST_CASE("fit examples") {
  const DiscretizedModel one = discretize(MeasurementModel::kernel(Family::Gaussian, 1.0, 5), 1);
  const BinnedLatent r1 = fit(one, dist({1, 1, 1, 1, 1, 1}), 0.0);
  CHECK(r1.theta == std::vector<double>{1.0});

  const DiscretizedModel d = discretize(MeasurementModel::kernel(Family::Gaussian, 1.0, 10), 50);
  const BinnedLatent u = fit(d, dist({5, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1}), 1e6);
  CHECK(oracle::tv(u.theta, std::vector<double>(50, 0.02)) <= 1e-4);

  CHECK_THROWS_AS(fit(d, dist({1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}), 0.0, FitOptions{.tolerance = 0.0}), ConfigError);
}

TEST_CASE("fit matches an independent exponentiated-gradient oracle") {
  Rng rng(31);
  const DiscretizedModel d = discretize(MeasurementModel::binomial(3), 20);
  const auto a = as_rows(d);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = oracle::random_simplex(4, rng);
    FitOptions opts;
    opts.tolerance = 1e-15;
    opts.step_tolerance = 1e-13;
    const BinnedLatent f = fit(d, {p, 0}, 0.05, opts);
    const auto o = oracle::eg_maximize(a, p, 0.05, 20, 1000000, 0.5);
    CHECK(oracle::tv(f.theta, o) <= 1e-4);
    CHECK(std::fabs(f.loglik - oracle::loglik(a, p, o, 0.05)) <= 1e-10);
  }
}

TEST_CASE("em and mirror ascent agree for mu > 0") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 8;
    const int bins = 20 + 8 * trial;
    const DiscretizedModel d = discretize(MeasurementModel::kernel(Family::Laplace, 0.5 + 0.3 * trial, n), bins);
    const ScoreDistribution p{oracle::random_simplex(n + 1, rng), 0};
    FitOptions opts;
    opts.tolerance = 1e-14;
    opts.step_tolerance = 1e-12;
    const BinnedLatent em = fit(d, p, 0.01, opts);
    opts.solver = SolverKind::MirrorAscent;
    const BinnedLatent ma = fit(d, p, 0.01, opts);
    CHECK(oracle::tv(em.theta, ma.theta) <= 1e-4);
    CHECK(std::fabs(em.loglik - ma.loglik) <= 1e-8);
  }
}

TEST_CASE("unregularized fit reaches an interior target") {
  Rng rng(43);
  const DiscretizedModel d = discretize(MeasurementModel::kernel(Family::Gaussian, 1.5, 8), 100);
  const auto theta0 = oracle::random_simplex(100, rng);
  const ScoreDistribution target = implied_marginal(theta0, d);
  const BinnedLatent f = fit(d, target, 0.0);
  CHECK(kl_divergence(target, implied_marginal(f.theta, d)) <= 1e-6);
  CHECK(f.converged);
}

TEST_CASE("objective gradient matches finite differences") {
  Rng rng(47);
  const DiscretizedModel d = discretize(MeasurementModel::kernel(Family::Gaussian, 1.0, 5), 10);
  const ScoreDistribution p{oracle::random_simplex(6, rng), 0};
  auto theta = oracle::random_simplex(10, rng);
  const auto g = objective_gradient(theta, d, p, 0.2);
  for (int r = 0; r < 10; ++r) {
    auto up = theta, dn = theta;
    const double h = 1e-6 * theta[r];
    up[r] += h;
    dn[r] -= h;
    // The objective extends off the simplex through the same formula.
    const double fd = (regularized_loglik(up, d, p, 0.2) - regularized_loglik(dn, d, p, 0.2)) / (2 * h);
    CHECK(g[r] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("implied marginal") {
  const DiscretizedModel b = discretize(MeasurementModel::binomial(1), 7);
  const auto m = implied_marginal(BinnedLatent::uniform(7).theta, b);
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(m[1] == doctest::Approx(0.5).epsilon(1e-14));

  const MeasurementModel g = MeasurementModel::kernel(Family::Gaussian, 1.3, 6);
  const DiscretizedModel d = discretize(g, 12);
  Rng rng(53);
  const auto theta = oracle::random_simplex(12, rng);
  const auto im = implied_marginal(theta, d);
  const auto u = implied_marginal(BinnedLatent::uniform(12).theta, d);
  for (int y = 0; y <= 6; ++y) {
    double o = 0.0, flat = 0.0;
    for (int r = 0; r < 12; ++r) {
      const double a = oracle::integrate([&](double x) { return oracle::kernel_pmf("gaussian", 1.3, 6, x)[y]; },
                                         r / 12.0, (r + 1) / 12.0);
      o += 12 * theta[r] * a;
      flat += a;
    }
    CHECK(std::fabs(im[y] - o) <= 1e-10);
    CHECK(std::fabs(u[y] - flat) <= 1e-10);
  }
}

TEST_CASE("second-order fit") {
  const MeasurementModel sharp = MeasurementModel::kernel(Family::Gaussian, 0.2, 5);
  const DiscretizedModel d2 = discretize_second_order(sharp, 100);
  std::vector<double> w(36, 0.0);
  for (int y = 0; y <= 5; ++y) w[y * 6 + y] = 1.0;
  const BinnedLatent f = fit_second_order(d2, dist(w), 0.0);
  // Mass concentrates within one score spacing around the points y / N.
  double near = 0.0;
  for (int r = 0; r < 100; ++r) {
    const double c = (r + 0.5) / 100.0;
    if (std::fabs(c * 5 - std::round(c * 5)) < 0.1) near += f.theta[r];
  }
  CHECK(near > 0.95);
  const BinnedLatent flat = fit_second_order(d2, dist(w), 1e6);
  CHECK(oracle::tv(flat.theta, std::vector<double>(100, 0.01)) <= 1e-4);

  // Small instance against the oracle.
  const DiscretizedModel s2 = discretize_second_order(MeasurementModel::binomial(2), 10);
  Rng rng(59);
  const auto p = oracle::random_simplex(9, rng);
  FitOptions opts;
  opts.tolerance = 1e-15;
  opts.step_tolerance = 1e-13;
  const BinnedLatent em = fit_second_order(s2, {p, 0}, 0.05, opts);
  const auto o = oracle::eg_maximize(as_rows(s2), p, 0.05, 10, 300000, 0.5);
  CHECK(oracle::tv(em.theta, o) <= 1e-4);
  CHECK_THROWS_AS(fit_second_order(discretize(sharp, 10), dist({1, 1, 1, 1, 1, 1}), 0.0), std::invalid_argument);
}

TEST_CASE("contraction diagnostic") {
  const DiscretizedModel d = discretize(MeasurementModel::kernel(Family::Gaussian, 0.2, 5), 200);
  Rng rng(61);
  const ScoreDistribution fixed = implied_marginal(BinnedLatent::uniform(200).theta, d);
  for (double e : contraction_diagnostic(BinnedLatent::uniform(200).theta, d, fixed, 10)) CHECK(e <= 1e-14);

  const ScoreDistribution p = implied_marginal(oracle::random_simplex(200, rng), d);
  const auto errs = contraction_diagnostic(BinnedLatent::uniform(200).theta, d, p, 50);
  // Ratios are only meaningful above rounding level.
  for (std::size_t t = 0; t + 1 < errs.size() && errs[t] > 1e-13; ++t) CHECK(errs[t + 1] < errs[t]);

  const DiscretizedModel wide = discretize(MeasurementModel::kernel(Family::Gaussian, 8.0, 5), 200);
  const ScoreDistribution q = implied_marginal(oracle::random_simplex(200, rng), wide);
  const auto slow = contraction_diagnostic(BinnedLatent::uniform(200).theta, wide, q, 50);
  CHECK(slow.back() / slow[slow.size() - 2] > 0.5);
}

TEST_CASE("latent JSON round trip") {
  BinnedLatent b = BinnedLatent::uniform(4);
  b.mu = 0.01;
  b.loglik = -2.5;
  b.iterations = 12;
  const BinnedLatent c = BinnedLatent::from_json(b.to_json());
  CHECK(c.theta == b.theta);
  CHECK(c.mu == b.mu);
  CHECK(c.iterations == 12);
  const auto j = b.to_json();
  for (const char* k : {"R", "mu", "theta", "loglik", "iterations", "converged"}) CHECK(j.contains(k));
  auto bad = j;
  bad["R"] = 5;
  CHECK_THROWS_AS(BinnedLatent::from_json(bad), ConfigError);
}

}
