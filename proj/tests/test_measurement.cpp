#include <cmath>

#include "doctest.h"
#include "harmonize/errors.hpp"
#include "harmonize/measurement.hpp"
#include "oracles.hpp"

using namespace harmonize;

TEST_SUITE("measurement") {

TEST_CASE("pmf examples") {
  const auto b = pmf(MeasurementModel::binomial(3), 0.0);
  CHECK(b[0] == 1.0);
  CHECK(b[1] == 0.0);
  CHECK(b[3] == 0.0);

  const auto g = pmf(MeasurementModel::kernel(Family::Gaussian, 0.7, 2), 0.5);
  CHECK(g[0] == doctest::Approx(g[2]).epsilon(1e-15));

  const auto p = pmf(MeasurementModel::kernel(Family::Gaussian, 2.0, 30), 0.5);
  const auto o = oracle::kernel_pmf("gaussian", 2.0, 30, 0.5);
  for (int y = 0; y <= 30; ++y) CHECK(std::fabs(p[y] - o[y]) < 1e-14);
}

TEST_CASE("pmf matches oracles for every family") {
  Rng rng(3);
  const std::vector<std::pair<Family, std::string>> fams = {
      {Family::Gaussian, "gaussian"}, {Family::Laplace, "laplace"},
      {Family::Epanechnikov, "epanechnikov"}, {Family::Triangular, "triangular"}};
  for (const auto& [f, name] : fams) {
    const MeasurementModel m = MeasurementModel::kernel(f, 1.7, 12);
    for (int i = 0; i < 50; ++i) {
      const double g = rng.uniform();
      const auto p = m.pmf(g);
      const auto o = oracle::kernel_pmf(name, 1.7, 12, g);
      for (int y = 0; y <= 12; ++y) CHECK(std::fabs(p[y] - o[y]) < 1e-13);
    }
  }
  const MeasurementModel bin = MeasurementModel::binomial(9);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.uniform();
    const auto p = bin.pmf(g);
    const auto o = oracle::binomial_pmf(9, g);
    for (int y = 0; y <= 9; ++y) CHECK(std::fabs(p[y] - o[y]) < 1e-13);
  }
}

TEST_CASE("pmf normalization, nonnegativity and unimodality") {
  Rng rng(11);
  const std::vector<MeasurementModel> models = {
      MeasurementModel::kernel(Family::Gaussian, 0.3, 30), MeasurementModel::kernel(Family::Laplace, 2.0, 30),
      MeasurementModel::kernel(Family::Epanechnikov, 1.2, 30), MeasurementModel::kernel(Family::Triangular, 0.8, 30),
      MeasurementModel::binomial(30)};
  for (const auto& m : models) {
    for (int i = 0; i < 1000; ++i) {
      const double g = rng.uniform();
      const auto p = m.pmf(g);
      double s = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
      if (m.is_kernel()) {
        const int mode = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        CHECK(std::fabs(mode - 30 * g) <= 0.5 + 1e-9);
      }
    }
  }
}

TEST_CASE("pmf limits and compact-support fallback") {
  const auto flat = pmf(MeasurementModel::kernel(Family::Gaussian, 1e6, 20), 0.3);
  CHECK(*std::max_element(flat.begin(), flat.end()) - *std::min_element(flat.begin(), flat.end()) <= 1e-6);
  // h below 1/(2N): every kernel evaluation may vanish.
  const auto point = pmf(MeasurementModel::kernel(Family::Epanechnikov, 0.01, 10), 0.52);
  CHECK(point[5] == 1.0);
}

TEST_CASE("pmf errors") {
  const MeasurementModel m = MeasurementModel::kernel(Family::Gaussian, 1.0, 5);
  CHECK_THROWS_AS(m.pmf(-0.1), std::domain_error);
  CHECK_THROWS_AS(m.pmf(1.1), std::domain_error);
  CHECK_THROWS_AS(MeasurementModel::kernel(Family::Gaussian, 0.0, 5), ConfigError);
  CHECK_THROWS_AS(MeasurementModel::kernel(Family::Laplace, -1.0, 5), ConfigError);
  CHECK_THROWS_AS(MeasurementModel::binomial(0), ConfigError);
}

TEST_CASE("sample_score") {
  Rng rng(5);
  const MeasurementModel bin = MeasurementModel::binomial(7);
  for (int i = 0; i < 100; ++i) CHECK(sample_score(bin, 1.0, rng) == 7);
  const MeasurementModel sharp = MeasurementModel::kernel(Family::Gaussian, 0.01, 30);
  for (int i = 0; i < 100; ++i) CHECK(sample_score(sharp, 0.5, rng) == 15);

  const MeasurementModel m = MeasurementModel::kernel(Family::Laplace, 1.5, 10);
  const auto p = m.pmf(0.37);
  std::vector<double> counts(11, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample_score(m, 0.37, rng)] += 1.0;
  CHECK(oracle::within_bands(counts, p, n));
}

TEST_CASE("discretize examples") {
  const DiscretizedModel a = discretize(MeasurementModel::binomial(1), 1);
  CHECK(a(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a(1, 0) == doctest::Approx(0.5).epsilon(1e-15));

  const DiscretizedModel b = discretize(MeasurementModel::binomial(2), 2);
  CHECK(std::fabs(b(2, 1) - 7.0 / 24.0) < 1e-14);

  for (const auto& m : {MeasurementModel::kernel(Family::Gaussian, 2.0, 30), MeasurementModel::kernel(Family::Laplace, 0.5, 30),
                        MeasurementModel::kernel(Family::Triangular, 3.0, 10), MeasurementModel::binomial(20)}) {
    const DiscretizedModel d = discretize(m, 100);
    for (int r = 0; r < 100; ++r) CHECK(std::fabs(d.column_sum(r) - 0.01) <= 1e-10);
    for (double v : d.entries()) CHECK(v >= 0.0);
  }
}

TEST_CASE("discretize matches adaptive quadrature") {
  const MeasurementModel m = MeasurementModel::kernel(Family::Gaussian, 2.0, 5);
  const DiscretizedModel d = discretize(m, 10);
  const auto o = oracle::bin_matrix([](double g) { return oracle::kernel_pmf("gaussian", 2.0, 5, g); }, 6, 10);
  for (int y = 0; y <= 5; ++y) {
    for (int r = 0; r < 10; ++r) CHECK(std::fabs(d(y, r) - o[y][r]) < 1e-10);
  }
}

TEST_CASE("node refinement changes smooth kernels little") {
  for (const auto& m : {MeasurementModel::kernel(Family::Gaussian, 1.0, 30), MeasurementModel::binomial(30)}) {
    const DiscretizedModel a = discretize(m, 200, 5);
    const DiscretizedModel b = discretize(m, 200, 10);
    double sup = 0.0;
    for (std::size_t i = 0; i < a.entries().size(); ++i) sup = std::max(sup, std::fabs(a.entries()[i] - b.entries()[i]));
    CHECK(sup <= 1e-8);
  }
}

TEST_CASE("second-order discretization") {
  const DiscretizedModel a = discretize_second_order(MeasurementModel::binomial(1), 1);
  CHECK(a.rows() == 4);
  CHECK(std::fabs(a(3, 0) - 1.0 / 3.0) < 1e-14);

  const MeasurementModel m = MeasurementModel::kernel(Family::Gaussian, 2.0, 5);
  const DiscretizedModel d2 = discretize_second_order(m, 10);
  for (int y1 = 0; y1 <= 5; ++y1) {
    for (int y2 = 0; y2 <= 5; ++y2) {
      for (int r = 0; r < 10; ++r) {
        CHECK(d2(y1 * 6 + y2, r) == d2(y2 * 6 + y1, r));
        const double o = oracle::integrate(
            [&](double g) {
              const auto p = oracle::kernel_pmf("gaussian", 2.0, 5, g);
              return p[y1] * p[y2];
            },
            r / 10.0, (r + 1) / 10.0);
        CHECK(std::fabs(d2(y1 * 6 + y2, r) - o) < 1e-8);
      }
    }
  }
  for (int r = 0; r < 10; ++r) CHECK(d2.column_sum(r) <= 0.1 + 1e-12);
}

TEST_CASE("model JSON round trip") {
  const MeasurementModel m = MeasurementModel::kernel(Family::Laplace, 1.34, 30);
  CHECK(MeasurementModel::from_json(m.to_json()) == m);
  CHECK(MeasurementModel::from_json(MeasurementModel::binomial(30).to_json()) == MeasurementModel::binomial(30));
  const auto j = nlohmann::json::parse(R"({"family": "gaussian", "h": 2.0, "N": 30})");
  CHECK(MeasurementModel::from_json(j) == MeasurementModel::kernel(Family::Gaussian, 2.0, 30));
  CHECK_THROWS_AS(MeasurementModel::from_json(nlohmann::json::parse(R"({"family": "cauchy", "h": 1, "N": 3})")), ConfigError);
}

}
