#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace harmonize {

// Probability vector over {0..N}, or over {0..N}^2 flattened row-major as
// y1 * (N + 1) + y2 for paired scores. `count` is the sample size for
// empirical distributions and 0 otherwise.
struct ScoreDistribution {
  std::vector<double> probs;
  std::size_t count = 0;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  // Entries >= 0 and sum within `tol` of one.
  bool is_valid(double tol = 1e-12) const;

  // Builds from nonnegative weights, normalizing to one.
  static ScoreDistribution normalized(std::vector<double> weights, std::size_t count = 0);
};

// One observed score row from a longitudinal study.
struct ObservationRecord {
  std::string subject_id;
  int visit = 0;
  std::string test_id;
  int score = 0;
  double age = 0.0;
  std::string group;
};

// Conditioning cell: records of the same group whose age lies within
// `half_width` years of `age_center`.
struct CovariateCell {
  std::string group;
  double age_center = 0.0;
  double half_width = 0.0;

  bool contains(const ObservationRecord& r) const;
};

ScoreDistribution empirical(std::span<const int> scores, int support);

// Records of one test, keeping each subject's earliest visit.
std::vector<ObservationRecord> first_visits(std::span<const ObservationRecord> records);
std::vector<ObservationRecord> filter_test(std::span<const ObservationRecord> records,
                                           const std::string& test_id);

// Empirical score distribution over the first visits that fall in `cell`.
// Throws NoDataError when the cell is empty.
ScoreDistribution conditional_empirical(std::span<const ObservationRecord> records,
                                        const CovariateCell& cell, int support);

// D(p || q) = sum p log(p / q) with 0 log(0 / q) = 0. Returns +inf when some
// p_i > 0 has q_i = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const ScoreDistribution& p, const ScoreDistribution& q);

double tv_distance(std::span<const double> p, std::span<const double> q);
double tv_distance(const ScoreDistribution& p, const ScoreDistribution& q);

// Upper tail P(chi2_df > t).
double chi_square_sf(double t, double df);

// Finite-sample bound on P(D(p_hat || p) >= t) for an n-sample multinomial
// over k categories.
using KlTailBound = std::function<double(double t, std::size_t n, std::size_t k)>;

// Method-of-types bound min(1, (n + 1)^(k - 1) exp(-n t)).
double multinomial_kl_tail_bound(double t, std::size_t n, std::size_t k);

// CSV with header `subject_id,visit,test_id,score,age,group`.
std::vector<ObservationRecord> read_records_csv(std::istream& in);
std::vector<ObservationRecord> read_records_csv(const std::string& path);
void write_records_csv(std::ostream& out, std::span<const ObservationRecord> records);

}  // namespace harmonize

namespace harmonize {

// Partition of records into covariate cells. A record belongs to the cell of
// its own group whose age center is nearest its age. With no cells every
// record falls into one pooled cell.
struct CovariateScheme {
  std::vector<CovariateCell> cells;

  std::size_t size() const { return cells.empty() ? 1 : cells.size(); }
  bool pooled() const { return cells.empty(); }

  // Throws NoDataError when the record's group has no cell.
  std::size_t assign(const ObservationRecord& record) const;

  // Empirical first-visit distribution of cell `index`.
  ScoreDistribution distribution(std::span<const ObservationRecord> records, std::size_t index,
                                 int support) const;

  std::string label(std::size_t index) const;

  // Cells for every (group, age center) combination.
  static CovariateScheme grid(const std::vector<std::string>& groups,
                              const std::vector<double>& age_centers, double half_width);
};

}  // namespace harmonize

namespace harmonize {

// Dense row-major matrix over score pairs, e.g. a joint p(y, z) or a
// conditional table p(z | y) with one row per y.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
};

}  // namespace harmonize
