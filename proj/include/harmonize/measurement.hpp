#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "harmonize/rng.hpp"

namespace harmonize {

enum class Family { Gaussian, Laplace, Epanechnikov, Triangular, Binomial };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

// Conditional law p_A(y | gamma) of an observed score y in {0..N} given the
// latent trait gamma in [0, 1].
//
// Kernel families use p_A(y | gamma) proportional to K((y - N gamma) / h),
// normalized over the discrete support, with the unnormalized shapes
//   Gaussian      exp(-u^2 / 2)
//   Laplace       exp(-|u|)
//   Epanechnikov  (1 - u^2)_+
//   Triangular    (1 - |u|)_+
// The binomial family is Binomial(N, gamma) and carries no bandwidth.
class MeasurementModel {
 public:
  MeasurementModel(Family family, double bandwidth, int support);

  static MeasurementModel binomial(int support) { return {Family::Binomial, 0.0, support}; }
  static MeasurementModel kernel(Family family, double bandwidth, int support) {
    return {family, bandwidth, support};
  }

  Family family() const { return family_; }
  // Zero for the binomial family.
  double bandwidth() const { return bandwidth_; }
  // N: scores live in {0..N}.
  int support() const { return support_; }
  int categories() const { return support_ + 1; }
  bool is_kernel() const { return family_ != Family::Binomial; }

  // Writes p_A(. | gamma) into `out` (size N + 1).
  void pmf_into(double gamma, std::span<double> out) const;
  std::vector<double> pmf(double gamma) const;

  // Single draw from p_A(. | gamma).
  int sample(double gamma, Rng& rng) const;

  // e.g. "gaussian(h=2)", "binomial"
  std::string label() const;

  nlohmann::json to_json() const;
  static MeasurementModel from_json(const nlohmann::json& j);

  friend bool operator==(const MeasurementModel&, const MeasurementModel&) = default;

 private:
  Family family_;
  double bandwidth_;
  int support_;
};

std::vector<double> pmf(const MeasurementModel& model, double gamma);
int sample_score(const MeasurementModel& model, double gamma, Rng& rng);
// Latent values in (0, 1) where p_A(y | gamma) is not smooth, sorted.
std::vector<double> kink_points(const MeasurementModel& model);

// Bin-integral matrix of a measurement model over R equal-width latent bins.
//
// For order k the rows index k-tuples of scores (row-major, first score
// slowest) and
//   A[(y1..yk), r] = integral over bin r of prod_j p_A(y_j | gamma) d gamma.
// Order 1 is the matrix A of the binned likelihood; order 2 is the paired
// matrix used by the second-order feasibility test and the two-observation
// likelihood. Every column sums to 1/R.
class DiscretizedModel {
 public:
  DiscretizedModel(MeasurementModel model, int order, int bins, int nodes_per_bin,
                   std::vector<double> entries);

  const MeasurementModel& model() const { return model_; }
  int order() const { return order_; }
  int bins() const { return bins_; }
  int nodes_per_bin() const { return nodes_per_bin_; }
  // (N + 1)^order
  std::size_t rows() const { return rows_; }

  double operator()(std::size_t row, std::size_t bin) const { return entries_[row * bins_ + bin]; }
  std::span<const double> row(std::size_t r) const {
    return {entries_.data() + r * bins_, static_cast<std::size_t>(bins_)};
  }
  std::span<const double> entries() const { return entries_; }

  double column_sum(std::size_t bin) const;

 private:
  MeasurementModel model_;
  int order_;
  int bins_;
  int nodes_per_bin_;
  std::size_t rows_;
  std::vector<double> entries_;
};

using SecondOrderModel = DiscretizedModel;

inline constexpr int kDefaultNodesPerBin = 5;
inline constexpr int kDefaultBins = 1000;

DiscretizedModel discretize(const MeasurementModel& model, int bins,
                            int nodes_per_bin = kDefaultNodesPerBin);
SecondOrderModel discretize_second_order(const MeasurementModel& model, int bins,
                                         int nodes_per_bin = kDefaultNodesPerBin);
// Generic k-fold product integrand. Memory grows as (N + 1)^order * bins.
DiscretizedModel discretize_order(const MeasurementModel& model, int order, int bins,
                                  int nodes_per_bin = kDefaultNodesPerBin);

}  // namespace harmonize
