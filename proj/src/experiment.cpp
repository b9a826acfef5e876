#include "harmonize/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "harmonize/baselines.hpp"
#include "harmonize/conversion.hpp"
#include "harmonize/diagnostics.hpp"
#include "harmonize/errors.hpp"
#include "harmonize/parallel.hpp"
#include "harmonize/selection.hpp"

namespace harmonize {
namespace {

using Row = std::vector<std::string>;

// Discretizations shared by all replicates of a run.
class ModelCache {
 public:
  ModelCache(int bins, int nodes) : bins_(bins), nodes_(nodes) {}

  const DiscretizedModel& get(const MeasurementModel& m, int order) {
    const std::string key = std::to_string(order) + m.to_json().dump();
    {
      std::lock_guard lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return *it->second;
    }
    auto d = std::make_unique<DiscretizedModel>(discretize_order(m, order, bins_, nodes_));
    std::lock_guard lock(mutex_);
    auto [it, inserted] = cache_.try_emplace(key, std::move(d));
    return *it->second;
  }

 private:
  int bins_;
  int nodes_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<DiscretizedModel>> cache_;
};

std::string bandwidth_text(const MeasurementModel& m) {
  return m.family() == Family::Binomial ? "NA" : format_number(m.bandwidth());
}

std::uint64_t replicate_seed(const ExperimentConfig& c, std::size_t rep) {
  return Rng::stream(c.simulation.seed, rep).next();
}

SimulatedData replicate_data(const ExperimentConfig& c, std::size_t rep) {
  SimulationConfig sim = c.simulation;
  sim.seed = replicate_seed(c, rep);
  return simulate_harmonizable(sim);
}

FitOptions fit_options(const ExperimentConfig& c) {
  FitOptions f;
  f.tolerance = c.tolerance;
  return f;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Index of the smallest score, ties toward the larger bandwidth.
std::size_t argmin_model(const std::vector<MeasurementModel>& models, const std::vector<double>& score) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < models.size(); ++i) {
    const double d = score[i] - score[best];
    if (d < -1e-12 || (std::fabs(d) <= 1e-12 && models[i].bandwidth() > models[best].bandwidth())) best = i;
  }
  return best;
}

RunReport start_report(const ExperimentConfig& c) {
  RunReport r;
  r.experiment = c.name;
  r.config_hash = c.hash();
  r.seed = c.simulation.seed;
  r.config = c.to_json();
  return r;
}

RunReport run_intrinsic(const ExperimentConfig& c) {
  const int support = c.simulation.y.model.support();
  const auto models = c.candidate_models(support);
  ModelCache cache(c.bins, c.nodes_per_bin);
  for (const auto& m : models) cache.get(m, 1);
  const std::size_t per_rep = models.size() * c.mu_values.size();
  std::vector<double> tv(c.replicates * per_rep);
  parallel_for(c.replicates, [&](std::size_t rep) {
    const SimulatedData data = replicate_data(c, rep);
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
        tv[rep * per_rep + m * c.mu_values.size() + k] =
            intrinsic_tv(data.y_pairs, cache.get(models[m], 1), c.mu_values[k], fit_options(c));
      }
    }
  });

  RunReport report = start_report(c);
  Table raw{"intrinsic_tv", {"replicate", "family", "h", "mu", "tv"}, {}};
  Table chosen{"intrinsic_selected", {"replicate", "mu", "family", "h", "tv"}, {}};
  Table summary{"intrinsic_summary", {"family", "h", "mu", "mean_tv", "times_selected"}, {}};
  std::vector<std::size_t> wins(per_rep, 0);
  for (std::size_t rep = 0; rep < c.replicates; ++rep) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
        raw.rows.push_back({std::to_string(rep), to_string(models[m].family()), bandwidth_text(models[m]),
                            format_number(c.mu_values[k]), format_number(tv[rep * per_rep + m * c.mu_values.size() + k])});
      }
    }
    for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
      std::vector<double> score(models.size());
      for (std::size_t m = 0; m < models.size(); ++m) score[m] = tv[rep * per_rep + m * c.mu_values.size() + k];
      const std::size_t best = argmin_model(models, score);
      ++wins[best * c.mu_values.size() + k];
      chosen.rows.push_back({std::to_string(rep), format_number(c.mu_values[k]), to_string(models[best].family()),
                             bandwidth_text(models[best]), format_number(score[best])});
    }
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
      std::vector<double> v;
      for (std::size_t rep = 0; rep < c.replicates; ++rep) v.push_back(tv[rep * per_rep + m * c.mu_values.size() + k]);
      summary.rows.push_back({to_string(models[m].family()), bandwidth_text(models[m]), format_number(c.mu_values[k]),
                              format_number(mean(v)), std::to_string(wins[m * c.mu_values.size() + k])});
    }
  }
  report.tables = {std::move(raw), std::move(chosen), std::move(summary)};
  return report;
}

RunReport run_mu_selection(const ExperimentConfig& c) {
  const MeasurementModel& model = c.simulation.y.model;
  const DiscretizedModel d1 = discretize(model, c.bins, c.nodes_per_bin);
  const SecondOrderModel d2 = discretize_second_order(model, c.bins, c.nodes_per_bin);
  std::vector<MuSelection> results(c.replicates);
  parallel_for(c.replicates, [&](std::size_t rep) {
    const SimulatedData data = replicate_data(c, rep);
    results[rep] = select_mu(data.y_pairs, data.y_records, d1, d2, c.mu_grid, {}, fit_options(c));
  });

  RunReport report = start_report(c);
  Table raw{"mu_loglik", {"replicate", "mu", "loglik"}, {}};
  Table chosen{"mu_selected", {"replicate", "mu"}, {}};
  Table summary{"mu_summary", {"mu", "mean_loglik", "is_max"}, {}};
  std::vector<std::vector<double>> by_mu(c.mu_grid.size());
  for (std::size_t rep = 0; rep < c.replicates; ++rep) {
    for (std::size_t k = 0; k < c.mu_grid.size(); ++k) {
      raw.rows.push_back({std::to_string(rep), format_number(c.mu_grid[k]), format_number(results[rep].table[k].loglik)});
      by_mu[k].push_back(results[rep].table[k].loglik);
    }
    chosen.rows.push_back({std::to_string(rep), format_number(results[rep].best)});
  }
  std::vector<double> means;
  for (const auto& v : by_mu) means.push_back(mean(v));
  std::size_t best = 0;
  for (std::size_t k = 1; k < means.size(); ++k) {
    if (means[k] >= means[best]) best = k;
  }
  for (std::size_t k = 0; k < c.mu_grid.size(); ++k) {
    summary.rows.push_back({format_number(c.mu_grid[k]), format_number(means[k]), k == best ? "1" : "0"});
  }
  report.tables = {std::move(raw), std::move(chosen), std::move(summary)};
  return report;
}

RunReport run_feasibility(const ExperimentConfig& c) {
  const int support = c.simulation.y.model.support();
  const auto models = c.candidate_models(support);
  ModelCache cache(c.feasibility_bins, c.nodes_per_bin);
  parallel_for(models.size() * 2, [&](std::size_t i) { cache.get(models[i / 2], 1 + i % 2); });
  FeasibilityOptions opts;
  opts.fit.tolerance = c.feasibility_tolerance;
  std::vector<FeasibilityResult> res(c.replicates * models.size() * 2);
  parallel_for(c.replicates, [&](std::size_t rep) {
    const SimulatedData data = replicate_data(c, rep);
    std::vector<int> first;
    for (const auto& r : first_visits(data.y_records)) first.push_back(r.score);
    const ScoreDistribution p1 = empirical(first, support);
    const ScoreDistribution p2 = paired_distribution(data.y_pairs);
    for (std::size_t m = 0; m < models.size(); ++m) {
      const std::size_t base = (rep * models.size() + m) * 2;
      res[base] = first_order_feasibility(p1, cache.get(models[m], 1), first.size(), opts);
      res[base + 1] = second_order_feasibility(p2, cache.get(models[m], 2), data.y_pairs.size(), opts);
    }
  });

  RunReport report = start_report(c);
  Table raw{"feasibility", {"replicate", "family", "h", "order", "statistic", "df", "p_asym", "p_finite"}, {}};
  Table summary{"feasibility_summary", {"family", "h", "order", "median_p_asym", "median_p_finite"}, {}};
  for (std::size_t rep = 0; rep < c.replicates; ++rep) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (int k = 0; k < 2; ++k) {
        const auto& r = res[(rep * models.size() + m) * 2 + k];
        raw.rows.push_back({std::to_string(rep), to_string(models[m].family()), bandwidth_text(models[m]),
                            std::to_string(r.order), format_number(r.statistic), format_number(r.df),
                            format_number(r.p_value_asymptotic), format_number(r.p_value_finite)});
      }
    }
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (int k = 0; k < 2; ++k) {
      std::vector<double> pa, pf;
      for (std::size_t rep = 0; rep < c.replicates; ++rep) {
        const auto& r = res[(rep * models.size() + m) * 2 + k];
        pa.push_back(r.p_value_asymptotic);
        pf.push_back(r.p_value_finite);
      }
      summary.rows.push_back({to_string(models[m].family()), bandwidth_text(models[m]), std::to_string(k + 1),
                              format_number(median(pa)), format_number(median(pf))});
    }
  }
  report.tables = {std::move(raw), std::move(summary)};
  return report;
}

struct BranchChoice {
  MeasurementModel model;
  double mu = 0.0;
};

BranchChoice choose_branch(const ExperimentConfig& c, ModelCache& cache, const PairedSample& pairs,
                           std::span<const ObservationRecord> records, int support) {
  const auto models = c.candidate_models(support);
  std::vector<double> tv(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    tv[m] = intrinsic_tv(pairs, cache.get(models[m], 1), c.selection_mu, fit_options(c));
  }
  const MeasurementModel& best = models[argmin_model(models, tv)];
  const MuSelection mus = select_mu(pairs, records, cache.get(best, 1), cache.get(best, 2), c.mu_grid, {}, fit_options(c));
  return {best, mus.best};
}

double conversion_ce(const ScoreMatrix& joint, const ConversionBranch& source, const ConversionBranch& target) {
  ConversionModel cm{source, target, {}};
  return population_cross_entropy(joint, conversion_table(cm, 0));
}

RunReport run_conversion_ce(const ExperimentConfig& c) {
  const ScoreMatrix joint = true_joint(c.simulation);
  const double truth_ce = population_cross_entropy(joint, conditional_from_joint(joint));
  ModelCache cache(c.bins, c.nodes_per_bin);
  const int ny = c.simulation.y.model.support();
  const int nz = c.simulation.z.model.support();
  for (const auto& m : c.candidate_models(ny)) cache.get(m, 1);
  for (const auto& m : c.candidate_models(nz)) cache.get(m, 1);

  struct Outcome {
    BranchChoice y{MeasurementModel::binomial(1)}, z{MeasurementModel::binomial(1)};
    double selected = 0.0, unregularized = 0.0, logit_normal = 0.0, zscore = 0.0;
  };
  std::vector<Outcome> out(c.replicates);
  parallel_for(c.replicates, [&](std::size_t rep) {
    const SimulatedData data = replicate_data(c, rep);
    Outcome& o = out[rep];
    o.y = choose_branch(c, cache, data.y_pairs, data.y_records, ny);
    o.z = choose_branch(c, cache, data.z_pairs, data.z_records, nz);
    const DiscretizedModel& dy = cache.get(o.y.model, 1);
    const DiscretizedModel& dz = cache.get(o.z.model, 1);
    o.selected = conversion_ce(joint, fit_branch(data.y_records, {}, dy, o.y.mu, fit_options(c)),
                               fit_branch(data.z_records, {}, dz, o.z.mu, fit_options(c)));
    o.unregularized = conversion_ce(joint, fit_branch(data.y_records, {}, dy, 0.0, fit_options(c)),
                                    fit_branch(data.z_records, {}, dz, 0.0, fit_options(c)));

    const auto ly = first_visits(data.y_records);
    const auto lz = first_visits(data.z_records);
    const auto py = fit_logit_normal(ly, intercept_design, o.y.model);
    const auto pz = fit_logit_normal(lz, intercept_design, o.z.model);
    o.logit_normal = conversion_ce(joint, {dy, {bin_logit_normal(py.beta[0], py.lambda, c.bins)}},
                                   {dz, {bin_logit_normal(pz.beta[0], pz.lambda, c.bins)}});

    std::vector<int> sy, sz;
    for (const auto& r : ly) sy.push_back(r.score);
    for (const auto& r : lz) sz.push_back(r.score);
    o.zscore = population_cross_entropy(joint, zscore_table(ZScoreParams::estimate(sy, sz), ny, nz));
  });

  RunReport report = start_report(c);
  Table raw{"conversion_ce",
            {"replicate", "method", "family_y", "h_y", "mu_y", "family_z", "h_z", "mu_z", "ce_pop"},
            {}};
  Table summary{"conversion_summary", {"method", "mean_ce_pop"}, {}};
  std::map<std::string, std::vector<double>> by_method;
  const std::vector<std::string> methods = {"selected", "unregularized", "logit_normal", "zscore"};
  for (std::size_t rep = 0; rep < c.replicates; ++rep) {
    const Outcome& o = out[rep];
    const double values[] = {o.selected, o.unregularized, o.logit_normal, o.zscore};
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const bool nonparametric = k < 2;
      const double mu_y = k == 0 ? o.y.mu : 0.0;
      const double mu_z = k == 0 ? o.z.mu : 0.0;
      const bool uses_models = k < 3;
      raw.rows.push_back({std::to_string(rep), methods[k],
                          uses_models ? to_string(o.y.model.family()) : "NA",
                          uses_models ? bandwidth_text(o.y.model) : "NA",
                          nonparametric ? format_number(mu_y) : "NA",
                          uses_models ? to_string(o.z.model.family()) : "NA",
                          uses_models ? bandwidth_text(o.z.model) : "NA",
                          nonparametric ? format_number(mu_z) : "NA", format_number(values[k])});
      by_method[methods[k]].push_back(values[k]);
    }
  }
  for (const auto& m : methods) summary.rows.push_back({m, format_number(mean(by_method[m]))});
  summary.rows.push_back({"truth", format_number(truth_ce)});
  report.tables = {std::move(raw), std::move(summary)};
  return report;
}

RunReport run_speed(const ExperimentConfig& c) {
  const auto models = c.candidate_models(c.simulation.y.model.support());
  ModelCache cache(c.bins, c.nodes_per_bin);
  struct Timing {
    std::size_t iterations = 0;
    double loglik = 0.0, fit_seconds = 0.0, em_seconds = 0.0, em_loglik = 0.0;
  };
  const std::size_t per_run = models.size() * c.mu_values.size();
  std::vector<Timing> t(c.replicates * per_run);
  // Serial on purpose: concurrent fits would distort the timings.
  for (std::size_t rep = 0; rep < c.replicates; ++rep) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      SimulationConfig sim = c.simulation;
      sim.y.model = models[m];
      sim.seed = replicate_seed(c, rep);
      const SimulatedData data = simulate_harmonizable(sim);
      std::vector<int> first;
      for (const auto& r : first_visits(data.y_records)) first.push_back(r.score);
      const ScoreDistribution p = empirical(first, models[m].support());
      const DiscretizedModel& d = cache.get(models[m], 1);
      for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
        Timing& cell = t[rep * per_run + m * c.mu_values.size() + k];
        FitOptions opts = fit_options(c);
        opts.gap_tolerance = c.speed_gap_tolerance;
        opts.accelerate = c.speed_accelerate;
        auto start = std::chrono::steady_clock::now();
        const BinnedLatent fitted = fit(d, p, c.mu_values[k], opts);
        cell.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        cell.iterations = fitted.iterations;
        cell.loglik = fitted.loglik;
        std::vector<double> theta = BinnedLatent::uniform(c.bins).theta;
        start = std::chrono::steady_clock::now();
        for (std::size_t s = 0; s < c.speed_em_steps; ++s) theta = em_step(theta, d, p, c.mu_values[k]);
        cell.em_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        cell.em_loglik = regularized_loglik(theta, d, p, c.mu_values[k]);
      }
    }
  }

  RunReport report = start_report(c);
  Table raw{"speed", {"run", "family", "h", "mu", "iterations", "loglik", "em_steps", "em_loglik"}, {}};
  Table timing{"speed_timing", {"run", "family", "h", "mu", "fit_seconds", "em_seconds"}, {}};
  Table summary{"speed_timing_summary", {"family", "h", "mu", "median_fit_seconds", "median_em_seconds"}, {}};
  for (std::size_t rep = 0; rep < c.replicates; ++rep) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
        const Timing& cell = t[rep * per_run + m * c.mu_values.size() + k];
        const Row key = {std::to_string(rep), to_string(models[m].family()), bandwidth_text(models[m]),
                         format_number(c.mu_values[k])};
        Row r = key;
        r.insert(r.end(), {std::to_string(cell.iterations), format_number(cell.loglik),
                           std::to_string(c.speed_em_steps), format_number(cell.em_loglik)});
        raw.rows.push_back(std::move(r));
        Row tr = key;
        tr.insert(tr.end(), {format_number(cell.fit_seconds), format_number(cell.em_seconds)});
        timing.rows.push_back(std::move(tr));
      }
    }
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t k = 0; k < c.mu_values.size(); ++k) {
      std::vector<double> f, e;
      for (std::size_t rep = 0; rep < c.replicates; ++rep) {
        f.push_back(t[rep * per_run + m * c.mu_values.size() + k].fit_seconds);
        e.push_back(t[rep * per_run + m * c.mu_values.size() + k].em_seconds);
      }
      summary.rows.push_back({to_string(models[m].family()), bandwidth_text(models[m]), format_number(c.mu_values[k]),
                              format_number(median(f)), format_number(median(e))});
    }
  }
  report.tables = {std::move(raw), std::move(timing), std::move(summary)};
  return report;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const Table& RunReport::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no table named " + name);
}

void RunReport::write_table(std::ostream& out, const Table& t) const {
  out << "config_hash,seed";
  for (const auto& c : t.columns) out << ',' << csv_escape(c);
  out << '\n';
  for (const auto& row : t.rows) {
    out << config_hash << ',' << seed;
    for (const auto& v : row) out << ',' << csv_escape(v);
    out << '\n';
  }
}

void RunReport::write(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  for (const auto& t : tables) {
    std::ofstream out(dir / (t.name + ".csv"), std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / (t.name + ".csv")).string());
    write_table(out, t);
  }
  std::ofstream cfg(dir / "config.json", std::ios::binary);
  cfg << config.dump(2) << '\n';
}

std::vector<std::string> experiment_names() {
  return {"intrinsic", "mu-selection", "conversion-ce", "feasibility", "speed"};
}

ExperimentConfig ExperimentConfig::defaults(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "intrinsic") {
    c.replicates = 30;
  } else if (name == "mu-selection") {
    c.replicates = 100;
  } else if (name == "conversion-ce") {
    c.replicates = 10;
  } else if (name == "feasibility") {
    c.replicates = 100;
    c.simulation.n = 300;
    c.simulation.n2 = 300;
    c.families = {"gaussian"};
    c.bandwidths = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    c.include_binomial = false;
  } else if (name == "speed") {
    c.replicates = 10;
    c.families = {"gaussian"};
    c.bandwidths = {0.2, 2.0, 8.0};
    c.include_binomial = false;
    c.mu_values = {0.0, 0.01};
  } else {
    std::string known;
    for (const auto& n : experiment_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown experiment '" + name + "' (known: " + known + ")");
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& name) {
  std::string chosen = name;
  if (chosen.empty()) {
    if (!j.contains("experiment")) throw ConfigError("experiment name missing");
    chosen = j.at("experiment").get<std::string>();
  }
  ExperimentConfig c = defaults(chosen);
  try {
    if (j.contains("simulation")) c.simulation = SimulationConfig::from_json(j.at("simulation"), c.simulation);
    if (j.contains("seed")) c.simulation.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("replicates")) c.replicates = j.at("replicates").get<std::size_t>();
    if (j.contains("bins")) c.bins = j.at("bins").get<int>();
    if (j.contains("nodes_per_bin")) c.nodes_per_bin = j.at("nodes_per_bin").get<int>();
    if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
    if (j.contains("families")) c.families = j.at("families").get<std::vector<std::string>>();
    if (j.contains("bandwidths")) c.bandwidths = j.at("bandwidths").get<std::vector<double>>();
    if (j.contains("include_binomial")) c.include_binomial = j.at("include_binomial").get<bool>();
    if (j.contains("mu_values")) c.mu_values = j.at("mu_values").get<std::vector<double>>();
    if (j.contains("mu_grid")) c.mu_grid = j.at("mu_grid").get<std::vector<double>>();
    if (j.contains("selection_mu")) c.selection_mu = j.at("selection_mu").get<double>();
    if (j.contains("feasibility_bins")) c.feasibility_bins = j.at("feasibility_bins").get<int>();
    if (j.contains("feasibility_tolerance")) c.feasibility_tolerance = j.at("feasibility_tolerance").get<double>();
    if (j.contains("speed_em_steps")) c.speed_em_steps = j.at("speed_em_steps").get<std::size_t>();
    if (j.contains("speed_gap_tolerance")) c.speed_gap_tolerance = j.at("speed_gap_tolerance").get<double>();
    if (j.contains("speed_accelerate")) c.speed_accelerate = j.at("speed_accelerate").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (c.bins < 1 || c.feasibility_bins < 1) throw ConfigError("bin counts must be positive");
  if (c.mu_grid.empty() || c.mu_values.empty()) throw ConfigError("mu lists must be nonempty");
  c.candidate_models(c.simulation.y.model.support());
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"experiment", name},
          {"simulation", simulation.to_json()},
          {"replicates", replicates},
          {"bins", bins},
          {"nodes_per_bin", nodes_per_bin},
          {"tolerance", tolerance},
          {"families", families},
          {"bandwidths", bandwidths},
          {"include_binomial", include_binomial},
          {"mu_values", mu_values},
          {"mu_grid", mu_grid},
          {"selection_mu", selection_mu},
          {"feasibility_bins", feasibility_bins},
          {"feasibility_tolerance", feasibility_tolerance},
          {"speed_em_steps", speed_em_steps},
          {"speed_gap_tolerance", speed_gap_tolerance},
          {"speed_accelerate", speed_accelerate}};
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = to_json();
  j["simulation"].erase("seed");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::vector<MeasurementModel> ExperimentConfig::candidate_models(int support) const {
  std::vector<Family> fams;
  for (const auto& f : families) fams.push_back(family_from_string(f));
  return ModelGrid::make(fams, bandwidths, support, include_binomial).models;
}

RunReport run_experiment(const ExperimentConfig& config) {
  try {
    if (config.name == "intrinsic") return run_intrinsic(config);
    if (config.name == "mu-selection") return run_mu_selection(config);
    if (config.name == "conversion-ce") return run_conversion_ce(config);
    if (config.name == "feasibility") return run_feasibility(config);
    if (config.name == "speed") return run_speed(config);
  } catch (const ConfigError& e) {
    throw ConfigError("experiment " + config.name + ": " + e.what());
  } catch (const NoDataError& e) {
    throw NoDataError("experiment " + config.name + ": " + e.what());
  } catch (const DegenerateModelError& e) {
    throw DegenerateModelError("experiment " + config.name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("experiment " + config.name + ": " + e.what());
  }
  ExperimentConfig::defaults(config.name);
  throw ConfigError("unknown experiment " + config.name);
}

}  // namespace harmonize
