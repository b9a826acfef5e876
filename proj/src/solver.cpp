#include "harmonize/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "harmonize/errors.hpp"

namespace harmonize {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTinyMass = 1e-300;

// Observed rows of the discretized model with their empirical weights. Rows
// with p_hat(y) = 0 contribute nothing to the objective or the update.
class Problem {
 public:
  Problem(const DiscretizedModel& model, const ScoreDistribution& p_hat, double mu, double floor = 0.0)
      : model_(model), mu_(mu), floor_(floor), bins_(model.bins()) {
    if (p_hat.size() != model.rows()) {
      std::ostringstream os;
      os << "dimension mismatch: distribution has " << p_hat.size() << " entries, model has "
         << model.rows() << " rows";
      throw std::invalid_argument(os.str());
    }
    if (!(mu >= 0.0)) throw ConfigError("regularization mu must be nonnegative");
    for (std::size_t y = 0; y < p_hat.size(); ++y) {
      if (p_hat[y] > 0.0) {
        rows_.push_back(y);
        weights_.push_back(p_hat[y]);
      }
    }
    marginal_.resize(rows_.size());
  }

  int bins() const { return bins_; }
  double mu() const { return mu_; }

  // Objective at theta; caches A_y . theta for the observed rows.
  double evaluate(std::span<const double> theta) {
    check_size(theta);
    double value = 0.0;
    degenerate_ = false;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto a = model_.row(rows_[i]);
      double m = std::inner_product(a.begin(), a.end(), theta.begin(), 0.0);
      if (floor_ > 0.0) m = std::max(m, floor_);
      marginal_[i] = m;
      if (m <= 0.0) {
        degenerate_ = true;
        degenerate_row_ = rows_[i];
        value = kNegInf;
      } else if (value != kNegInf) {
        value += weights_[i] * std::log(m);
      }
    }
    if (mu_ > 0.0 && value != kNegInf) {
      double reg = 0.0;
      for (double t : theta) {
        if (t <= 0.0) return kNegInf;
        reg += std::log(bins_ * t);
      }
      value += mu_ / bins_ * reg;
    }
    return value;
  }

  // Regularized EM update from the cached marginals of the last evaluate().
  void em_map(std::span<const double> theta, std::span<double> out) {
    if (degenerate_) {
      std::ostringstream os;
      os << "degenerate model: implied probability of observed row " << degenerate_row_
         << " is zero (empirical distribution outside the reachable marginals)";
      throw DegenerateModelError(os.str());
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double w = weights_[i] / marginal_[i];
      const auto a = model_.row(rows_[i]);
      for (int r = 0; r < bins_; ++r) out[r] += w * a[r];
    }
    const double scale = 1.0 / (1.0 + mu_);
    const double floor = mu_ / ((1.0 + mu_) * bins_);
    double gmax = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < bins_; ++r) {
      const double g = out[r] + (mu_ > 0.0 ? mu_ / (bins_ * theta[r]) : 0.0);
      gmax = std::max(gmax, g);
      out[r] = scale * theta[r] * out[r] + floor;
      // Bins decaying toward zero would otherwise sink into subnormals.
      if (out[r] < kTinyMass) out[r] = 0.0;
    }
    // Concavity bound: objective(optimum) - objective(theta) <= max_r g_r - theta . g,
    // and theta . g = 1 + mu.
    gap_ = gmax - (1.0 + mu_);
  }

  // Duality-gap bound at the input of the last em_map().
  double gap() const { return gap_; }

  // Gradient from the cached marginals of the last evaluate().
  void gradient(std::span<const double> theta, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const double w = weights_[i] / marginal_[i];
      const auto a = model_.row(rows_[i]);
      for (int r = 0; r < bins_; ++r) out[r] += w * a[r];
    }
    if (mu_ > 0.0) {
      for (int r = 0; r < bins_; ++r) out[r] += mu_ / (bins_ * theta[r]);
    }
  }

 private:
  void check_size(std::span<const double> theta) const {
    if (theta.size() != static_cast<std::size_t>(bins_)) {
      throw std::invalid_argument("dimension mismatch: theta length differs from bin count");
    }
  }

  const DiscretizedModel& model_;
  double mu_;
  double floor_;
  int bins_;
  std::vector<std::size_t> rows_;
  std::vector<double> weights_;
  std::vector<double> marginal_;
  bool degenerate_ = false;
  std::size_t degenerate_row_ = 0;
  double gap_ = std::numeric_limits<double>::infinity();
};

double half_l1(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> initial_theta(int bins, const FitOptions& options) {
  if (options.initial.empty()) return std::vector<double>(bins, 1.0 / bins);
  if (options.initial.size() != static_cast<std::size_t>(bins)) {
    throw ConfigError("initial theta length differs from bin count");
  }
  std::vector<double> theta = options.initial;
  double total = 0.0;
  for (double t : theta) {
    if (!(t >= 0.0)) throw ConfigError("initial theta must be nonnegative");
    total += t;
  }
  if (!(total > 0.0)) throw ConfigError("initial theta must have positive mass");
  for (double& t : theta) t /= total;
  return theta;
}

bool should_stop(double improvement, double step, double gap, const FitOptions& options) {
  if (options.gap_tolerance > 0.0 && gap < options.gap_tolerance) return true;
  if (!(std::fabs(improvement) < options.tolerance)) return false;
  return options.step_tolerance <= 0.0 || step < options.step_tolerance;
}

BinnedLatent run_em(Problem& problem, const FitOptions& options) {
  const int bins = problem.bins();
  std::vector<double> theta = initial_theta(bins, options);
  double value = problem.evaluate(theta);
  if (!std::isfinite(value)) throw DegenerateModelError("objective is not finite at the initial point");

  BinnedLatent out;
  out.mu = problem.mu();
  std::vector<double> t1(bins), t2(bins), extrap(bins), cand(bins), r(bins), v(bins);
  std::size_t iters = 0;
  double improvement = std::numeric_limits<double>::infinity();
  double step = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;

  while (iters < options.max_iters) {
    if (!options.accelerate || options.max_iters - iters < 3) {
      problem.em_map(theta, t1);
      gap = problem.gap();
      const double next = problem.evaluate(t1);
      ++iters;
      improvement = next - value;
      step = half_l1(t1, theta);
      theta.swap(t1);
      value = next;
    } else {
      // Two plain steps, then an extrapolated point finished by one more step.
      problem.em_map(theta, t1);
      gap = problem.gap();
      const double v1 = problem.evaluate(t1);
      problem.em_map(t1, t2);
      gap = std::min(gap, problem.gap());
      const double v2 = problem.evaluate(t2);
      iters += 2;
      // Extrapolate in log space so the candidate stays strictly positive.
      double rr = 0.0;
      double vv = 0.0;
      for (int k = 0; k < bins; ++k) {
        const double l0 = std::log(std::max(theta[k], kTinyMass));
        const double l1 = std::log(std::max(t1[k], kTinyMass));
        const double l2 = std::log(std::max(t2[k], kTinyMass));
        r[k] = l1 - l0;
        v[k] = l2 - 2.0 * l1 + l0;
        rr += r[k] * r[k];
        vv += v[k] * v[k];
      }
      double next_value = v2;
      std::vector<double>* next = &t2;
      if (vv > 0.0 && rr > 0.0) {
        double alpha = std::min(-1.0, -std::sqrt(rr / vv));
        bool feasible = false;
        for (int attempt = 0; attempt < 8 && alpha < -1.0; ++attempt) {
          double lmax = -std::numeric_limits<double>::infinity();
          for (int k = 0; k < bins; ++k) {
            extrap[k] = std::log(std::max(theta[k], kTinyMass)) - 2.0 * alpha * r[k] + alpha * alpha * v[k];
            lmax = std::max(lmax, extrap[k]);
          }
          double total = 0.0;
          for (int k = 0; k < bins; ++k) {
            extrap[k] = std::exp(extrap[k] - lmax);
            total += extrap[k];
          }
          for (double& e : extrap) e /= total;
          const double ve = problem.evaluate(extrap);
          if (std::isfinite(ve)) {
            feasible = true;
            break;
          }
          alpha = 0.5 * (alpha - 1.0);
        }
        if (feasible && alpha < -1.0) {
          problem.em_map(extrap, cand);
          const double vc = problem.evaluate(cand);
          ++iters;
          if (vc >= value) {
            next = &cand;
            next_value = vc;
          }
        }
      }
      if (next == &t2) problem.evaluate(t2);
      improvement = next_value - value;
      step = half_l1(*next, theta);
      theta.swap(*next);
      value = next_value;
      (void)v1;
    }
    if (should_stop(improvement, step, gap, options)) {
      converged = true;
      break;
    }
  }
  out.theta = std::move(theta);
  out.loglik = value;
  out.iterations = iters;
  out.converged = converged;
  out.final_improvement = improvement;
  out.gap = gap;
  return out;
}

BinnedLatent run_mirror(Problem& problem, const FitOptions& options) {
  const int bins = problem.bins();
  std::vector<double> theta = initial_theta(bins, options);
  double value = problem.evaluate(theta);
  if (!std::isfinite(value)) throw DegenerateModelError("objective is not finite at the initial point");

  BinnedLatent out;
  out.mu = problem.mu();
  std::vector<double> grad(bins), cand(bins);
  double eta = 1.0;
  std::size_t iters = 0;
  double improvement = std::numeric_limits<double>::infinity();
  double step = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;

  while (iters < options.max_iters) {
    problem.evaluate(theta);
    problem.gradient(theta, grad);
    const double gmax = *std::max_element(grad.begin(), grad.end());
    gap = gmax - (1.0 + problem.mu());
    bool accepted = false;
    double cand_value = kNegInf;
    while (eta > 1e-30) {
      double total = 0.0;
      for (int k = 0; k < bins; ++k) {
        cand[k] = theta[k] * std::exp(eta * (grad[k] - gmax));
        total += cand[k];
      }
      for (double& c : cand) c /= total;
      cand_value = problem.evaluate(cand);
      if (cand_value >= value) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    ++iters;
    if (!accepted) {
      // No ascent direction left at working precision.
      improvement = 0.0;
      step = 0.0;
      converged = true;
      break;
    }
    improvement = cand_value - value;
    step = half_l1(cand, theta);
    theta.swap(cand);
    value = cand_value;
    eta = std::min(eta * 1.5, 1e4);
    if (should_stop(improvement, step, gap, options)) {
      converged = true;
      break;
    }
  }
  out.theta = std::move(theta);
  out.loglik = value;
  out.iterations = iters;
  out.converged = converged;
  out.final_improvement = improvement;
  out.gap = gap;
  return out;
}

}  // namespace

BinnedLatent BinnedLatent::uniform(int bins) {
  BinnedLatent b;
  b.theta.assign(bins, 1.0 / bins);
  b.converged = true;
  return b;
}

nlohmann::json BinnedLatent::to_json() const {
  return nlohmann::json{{"R", bins()},        {"mu", mu},
                        {"theta", theta},     {"loglik", loglik},
                        {"iterations", iterations}, {"converged", converged}};
}

BinnedLatent BinnedLatent::from_json(const nlohmann::json& j) {
  try {
    BinnedLatent b;
    b.theta = j.at("theta").get<std::vector<double>>();
    b.mu = j.at("mu").get<double>();
    b.loglik = j.value("loglik", 0.0);
    b.iterations = j.value("iterations", std::size_t{0});
    b.converged = j.value("converged", false);
    if (j.contains("R") && j.at("R").get<int>() != b.bins()) {
      throw ConfigError("latent JSON: R does not match theta length");
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("latent JSON: ") + e.what());
  }
}

double regularized_loglik(std::span<const double> theta, const DiscretizedModel& model,
                          const ScoreDistribution& p_hat, double mu) {
  Problem problem(model, p_hat, mu);
  return problem.evaluate(theta);
}

std::vector<double> em_step(std::span<const double> theta, const DiscretizedModel& model,
                            const ScoreDistribution& p_hat, double mu) {
  Problem problem(model, p_hat, mu);
  problem.evaluate(theta);
  std::vector<double> out(theta.size());
  problem.em_map(theta, out);
  return out;
}

std::vector<double> objective_gradient(std::span<const double> theta, const DiscretizedModel& model,
                                       const ScoreDistribution& p_hat, double mu) {
  Problem problem(model, p_hat, mu);
  problem.evaluate(theta);
  std::vector<double> out(theta.size());
  problem.gradient(theta, out);
  return out;
}

BinnedLatent fit(const DiscretizedModel& model, const ScoreDistribution& p_hat, double mu,
                 const FitOptions& options) {
  if (!(options.tolerance > 0.0)) throw ConfigError("fit tolerance must be positive");
  Problem problem(model, p_hat, mu, options.marginal_floor);
  if (model.bins() == 1) {
    BinnedLatent b = BinnedLatent::uniform(1);
    b.mu = mu;
    b.loglik = problem.evaluate(b.theta);
    return b;
  }
  return options.solver == SolverKind::MirrorAscent ? run_mirror(problem, options) : run_em(problem, options);
}

BinnedLatent fit_second_order(const SecondOrderModel& model, const ScoreDistribution& p_hat2, double mu,
                              const FitOptions& options) {
  if (model.order() != 2) throw std::invalid_argument("fit_second_order: model is not second order");
  return fit(model, p_hat2, mu, options);
}

ScoreDistribution implied_marginal(std::span<const double> theta, const DiscretizedModel& model) {
  if (theta.size() != static_cast<std::size_t>(model.bins())) {
    throw std::invalid_argument("implied_marginal: dimension mismatch");
  }
  std::vector<double> p(model.rows());
  double total = 0.0;
  for (std::size_t y = 0; y < model.rows(); ++y) {
    const auto a = model.row(y);
    p[y] = model.bins() * std::inner_product(a.begin(), a.end(), theta.begin(), 0.0);
    total += p[y];
  }
  for (double& v : p) v /= total;
  return {std::move(p), 0};
}

std::vector<double> contraction_diagnostic(std::span<const double> theta0, const DiscretizedModel& model,
                                           const ScoreDistribution& p_hat, std::size_t steps) {
  std::vector<double> theta(theta0.begin(), theta0.end());
  std::vector<double> errors;
  errors.reserve(steps + 1);
  auto error_of = [&](std::span<const double> t) {
    const ScoreDistribution m = implied_marginal(t, model);
    double e = 0.0;
    for (std::size_t y = 0; y < m.size(); ++y) e += std::fabs(m[y] - p_hat[y]);
    return e;
  };
  errors.push_back(error_of(theta));
  for (std::size_t s = 0; s < steps; ++s) {
    theta = em_step(theta, model, p_hat, 0.0);
    errors.push_back(error_of(theta));
  }
  return errors;
}

}  // namespace harmonize
