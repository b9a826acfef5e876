// Command-line front end: simulate data, fit and select models, run
// feasibility tests, convert scores and run the named experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "harmonize/baselines.hpp"
#include "harmonize/conversion.hpp"
#include "harmonize/diagnostics.hpp"
#include "harmonize/errors.hpp"
#include "harmonize/experiment.hpp"
#include "harmonize/selection.hpp"
#include "harmonize/simulation.hpp"

namespace fs = std::filesystem;
using namespace harmonize;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Global {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Writes to <out>/<name> when --out is set, else to stdout.
void emit(const Global& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  std::ofstream f(fs::path(g.out) / name, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + (fs::path(g.out) / name).string());
  f << text;
}

struct ModelArgs {
  std::string family = "gaussian";
  double h = 2.0;
  int support = 30;

  MeasurementModel model() const {
    const Family f = family_from_string(family);
    return f == Family::Binomial ? MeasurementModel::binomial(support) : MeasurementModel::kernel(f, h, support);
  }
};

void add_model_args(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--family", m.family, "gaussian, laplace, epanechnikov, triangular or binomial");
  cmd->add_option("--bandwidth", m.h, "kernel bandwidth");
  cmd->add_option("-N,--support", m.support, "maximum score");
}

struct SchemeArgs {
  std::vector<std::string> groups;
  std::vector<double> ages;
  double half_width = 5.0;

  CovariateScheme scheme() const {
    if (groups.empty() && ages.empty()) return {};
    if (groups.empty() || ages.empty()) throw ConfigError("--groups and --ages must be given together");
    return CovariateScheme::grid(groups, ages, half_width);
  }
};

void add_scheme_args(CLI::App* cmd, SchemeArgs& s) {
  cmd->add_option("--groups", s.groups, "covariate groups")->delimiter(',');
  cmd->add_option("--ages", s.ages, "age centers")->delimiter(',');
  cmd->add_option("--half-width", s.half_width, "age half width in years");
}

json scheme_to_json(const CovariateScheme& s) {
  json cells = json::array();
  for (const auto& c : s.cells) cells.push_back({{"group", c.group}, {"age_center", c.age_center}, {"half_width", c.half_width}});
  return cells;
}

CovariateScheme scheme_from_json(const json& j) {
  CovariateScheme s;
  for (const auto& c : j) {
    s.cells.push_back({c.at("group").get<std::string>(), c.at("age_center").get<double>(), c.at("half_width").get<double>()});
  }
  return s;
}

std::vector<ObservationRecord> load_test(const std::string& path, const std::string& test) {
  auto records = read_records_csv(path);
  if (!test.empty()) records = filter_test(records, test);
  if (records.empty()) throw NoDataError("no records for test '" + test + "' in " + path);
  return records;
}

struct FitFile {
  std::string test_id;
  ConversionBranch branch;
  CovariateScheme scheme;
};

json fit_to_json(const FitFile& f) {
  json latents = json::array();
  for (const auto& l : f.branch.latents) latents.push_back(l.to_json());
  return {{"test_id", f.test_id},
          {"model", f.branch.model().to_json()},
          {"nodes_per_bin", f.branch.discretized.nodes_per_bin()},
          {"scheme", scheme_to_json(f.scheme)},
          {"latents", latents}};
}

FitFile load_fit(const std::string& path) {
  const json j = load_json(path);
  try {
    const MeasurementModel m = MeasurementModel::from_json(j.at("model"));
    std::vector<BinnedLatent> latents;
    for (const auto& l : j.at("latents")) latents.push_back(BinnedLatent::from_json(l));
    if (latents.empty()) throw ConfigError(path + ": no latents");
    return {j.value("test_id", ""),
            {discretize(m, latents.front().bins(), j.value("nodes_per_bin", kDefaultNodesPerBin)), latents},
            scheme_from_json(j.value("scheme", json::array()))};
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::vector<MeasurementModel> grid_models(const std::vector<std::string>& families, const std::vector<double>& hs,
                                          int support, bool binomial) {
  std::vector<Family> fams;
  for (const auto& f : families) fams.push_back(family_from_string(f));
  return ModelGrid::make(fams, hs, support, binomial).models;
}

std::string h_text(const MeasurementModel& m) {
  return m.family() == Family::Binomial ? "NA" : format_number(m.bandwidth());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score harmonization through a shared latent trait"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output directory");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate harmonizable scores");
  std::optional<std::size_t> sim_n, sim_n2, sim_cw;
  sim->add_option("--n", sim_n, "subjects per study");
  sim->add_option("--n2", sim_n2, "subjects with a second visit");
  sim->add_option("--crosswalk-n", sim_cw, "subjects scored on both instruments");

  // fit
  auto* fitc = app.add_subcommand("fit", "fit latent distributions per covariate cell");
  std::string records_path, test_id;
  ModelArgs margs;
  SchemeArgs sargs;
  double mu = 0.01;
  int bins = kDefaultBins;
  fitc->add_option("--records", records_path, "observation CSV")->required();
  fitc->add_option("--test", test_id, "test id to fit");
  fitc->add_option("--mu", mu, "regularization");
  fitc->add_option("--bins", bins, "latent bins");
  add_model_args(fitc, margs);
  add_scheme_args(fitc, sargs);

  // select-model
  auto* selm = app.add_subcommand("select-model", "intrinsic-variability model selection");
  std::vector<std::string> families = {"gaussian", "laplace"};
  std::vector<double> bandwidths = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0};
  bool no_binomial = false;
  double max_gap = 500.0;
  selm->add_option("--records", records_path, "observation CSV")->required();
  selm->add_option("--test", test_id, "test id");
  selm->add_option("-N,--support", margs.support, "maximum score");
  selm->add_option("--families", families, "kernel families")->delimiter(',');
  selm->add_option("--bandwidths", bandwidths, "bandwidth grid")->delimiter(',');
  selm->add_flag("--no-binomial", no_binomial, "leave the binomial model out");
  selm->add_option("--mu", mu, "regularization for the latent fits");
  selm->add_option("--bins", bins, "latent bins");
  selm->add_option("--max-gap-days", max_gap, "largest gap between paired visits");

  // select-mu
  auto* selmu = app.add_subcommand("select-mu", "two-observation likelihood selection of mu");
  std::vector<double> mu_grid = default_mu_grid();
  selmu->add_option("--records", records_path, "observation CSV")->required();
  selmu->add_option("--test", test_id, "test id");
  selmu->add_option("--mu-grid", mu_grid, "candidate mu values")->delimiter(',');
  selmu->add_option("--bins", bins, "latent bins");
  selmu->add_option("--max-gap-days", max_gap, "largest gap between paired visits");
  add_model_args(selmu, margs);
  add_scheme_args(selmu, sargs);

  // feasibility
  auto* feas = app.add_subcommand("feasibility", "first- and second-order feasibility tests");
  int max_order = 2;
  double feas_tol = 1e-8;
  feas->add_option("--records", records_path, "observation CSV")->required();
  feas->add_option("--test", test_id, "test id");
  feas->add_option("-N,--support", margs.support, "maximum score");
  feas->add_option("--families", families, "kernel families")->delimiter(',');
  feas->add_option("--bandwidths", bandwidths, "bandwidth grid")->delimiter(',');
  feas->add_flag("--no-binomial", no_binomial, "leave the binomial model out");
  feas->add_option("--bins", bins, "latent bins");
  feas->add_option("--order", max_order, "highest order tested (1 or 2)");
  feas->add_option("--tolerance", feas_tol, "fit tolerance");
  feas->add_option("--max-gap-days", max_gap, "largest gap between paired visits");

  // convert
  auto* conv = app.add_subcommand("convert", "convert source scores to target-score distributions");
  std::string source_fit, target_fit;
  int draws = 0;
  conv->add_option("--source-fit", source_fit, "fit JSON of the source test")->required();
  conv->add_option("--target-fit", target_fit, "fit JSON of the target test")->required();
  conv->add_option("--records", records_path, "records whose source scores are converted")->required();
  conv->add_option("--draws", draws, "Monte-Carlo draws per record");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "cross entropy of conversions on a crosswalk sample");
  std::string crosswalk_path, train_path;
  eval->add_option("--crosswalk", crosswalk_path, "crosswalk CSV")->required();
  eval->add_option("--source-fit", source_fit, "fit JSON of the source test")->required();
  eval->add_option("--target-fit", target_fit, "fit JSON of the target test")->required();
  eval->add_option("--training", train_path, "training records for the baselines");

  // experiment
  auto* expc = app.add_subcommand("experiment", "run a named experiment and write its CSV tables");
  std::string exp_name;
  std::optional<std::size_t> reps;
  expc->add_option("name", exp_name, "intrinsic, mu-selection, conversion-ce, feasibility or speed");
  expc->add_option("--replicates", reps, "replicate count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      json j = g.config.empty() ? json::object() : load_json(g.config);
      SimulationConfig cfg = SimulationConfig::from_json(j.contains("simulation") ? j.at("simulation") : j);
      if (g.seed) cfg.seed = *g.seed;
      if (sim_n) cfg.n = *sim_n;
      if (sim_n2) cfg.n2 = *sim_n2;
      if (sim_cw) cfg.crosswalk_n = *sim_cw;
      cfg.validate();
      const SimulatedData data = simulate_harmonizable(cfg);
      std::vector<ObservationRecord> all = data.y_records;
      all.insert(all.end(), data.z_records.begin(), data.z_records.end());
      std::ostringstream rec, cw;
      write_records_csv(rec, all);
      write_crosswalk_csv(cw, data.crosswalk);
      emit(g, "records.csv", rec.str());
      if (!g.out.empty()) {
        emit(g, "crosswalk.csv", cw.str());
        emit(g, "simulation.json", cfg.to_json().dump(2) + "\n");
      }
      return 0;
    }

    if (*fitc) {
      const auto records = load_test(records_path, test_id);
      const CovariateScheme scheme = sargs.scheme();
      FitFile f{test_id, fit_branch(records, scheme, discretize(margs.model(), bins), mu), scheme};
      emit(g, "fit_" + (test_id.empty() ? std::string("all") : test_id) + ".json", fit_to_json(f).dump(2) + "\n");
      return 0;
    }

    if (*selm) {
      const auto records = load_test(records_path, test_id);
      const PairedSample pairs = make_pairs(records, test_id, margs.support, {max_gap, 0});
      ModelGrid grid{grid_models(families, bandwidths, margs.support, !no_binomial)};
      SelectionContext ctx;
      ctx.bins = bins;
      const ModelSelection sel = select_model(pairs, grid, mu, ctx);
      std::ostringstream os;
      os << "family,h,mu,tv,selected\n";
      for (const auto& row : sel.table) {
        os << to_string(row.model.family()) << ',' << h_text(row.model) << ',' << format_number(row.mu) << ','
           << format_number(row.tv) << ',' << (row.model == sel.best ? 1 : 0) << '\n';
      }
      emit(g, "select_model.csv", os.str());
      return 0;
    }

    if (*selmu) {
      const auto records = load_test(records_path, test_id);
      const PairedSample pairs = make_pairs(records, test_id, margs.support, {max_gap, 0});
      SelectionContext ctx;
      ctx.bins = bins;
      const MeasurementModel m = margs.model();
      const MuSelection sel = select_mu(pairs, records, m, mu_grid, sargs.scheme(), ctx);
      std::ostringstream os;
      os << "family,h,mu,loglik,selected\n";
      for (const auto& row : sel.table) {
        os << to_string(m.family()) << ',' << h_text(m) << ',' << format_number(row.mu) << ','
           << format_number(row.loglik) << ',' << (row.mu == sel.best ? 1 : 0) << '\n';
      }
      emit(g, "select_mu.csv", os.str());
      return 0;
    }

    if (*feas) {
      if (max_order < 1 || max_order > 2) throw ConfigError("--order must be 1 or 2");
      const auto records = load_test(records_path, test_id);
      std::vector<int> first;
      for (const auto& r : first_visits(records)) first.push_back(r.score);
      const ScoreDistribution p1 = empirical(first, margs.support);
      const PairedSample pairs = make_pairs(records, test_id, margs.support, {max_gap, 0});
      FeasibilityOptions opts;
      opts.fit.tolerance = feas_tol;
      std::ostringstream os;
      os << "model,order,statistic,df,p_asym,p_finite\n";
      for (const auto& m : grid_models(families, bandwidths, margs.support, !no_binomial)) {
        auto line = [&](const FeasibilityResult& r) {
          os << m.label() << ',' << r.order << ',' << format_number(r.statistic) << ',' << format_number(r.df) << ','
             << format_number(r.p_value_asymptotic) << ',' << format_number(r.p_value_finite) << '\n';
        };
        line(first_order_feasibility(p1, discretize(m, bins), first.size(), opts));
        if (max_order >= 2 && !pairs.empty()) {
          line(second_order_feasibility(paired_distribution(pairs), discretize_second_order(m, bins), pairs.size(), opts));
        }
      }
      os << "# p-values are conservative: the fitted marginal stands in for the null\n";
      emit(g, "feasibility.csv", os.str());
      return 0;
    }

    if (*conv) {
      const FitFile src = load_fit(source_fit);
      const FitFile dst = load_fit(target_fit);
      ConversionModel model{src.branch, dst.branch, src.scheme};
      model.validate();
      auto records = first_visits(load_test(records_path, src.test_id));
      std::vector<std::vector<int>> samples;
      if (draws > 0) {
        Rng rng(g.seed.value_or(1));
        samples = conversion_sample(records, model, draws, rng);
      }
      std::vector<ScoreMatrix> tables(model.scheme.size());
      std::ostringstream os;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t cell = model.scheme.assign(records[i]);
        if (tables[cell].rows == 0) tables[cell] = conversion_table(model, cell);
        const auto row = tables[cell].row(records[i].score);
        nlohmann::ordered_json line = {{"subject_id", records[i].subject_id},
                     {"y", records[i].score},
                     {"cell", model.scheme.label(cell)},
                     {"pmf_z", std::vector<double>(row.begin(), row.end())},
                     {"samples", draws > 0 ? samples[i] : std::vector<int>{}}};
        os << line.dump() << '\n';
      }
      emit(g, "converted.jsonl", os.str());
      return 0;
    }

    if (*eval) {
      const FitFile src = load_fit(source_fit);
      const FitFile dst = load_fit(target_fit);
      ConversionModel model{src.branch, dst.branch, src.scheme};
      model.validate();
      const auto crosswalk = read_crosswalk_csv(crosswalk_path);
      std::ostringstream os;
      os << "method,cross_entropy,zero_probability\n";
      auto line = [&](const std::string& name, const CrossEntropyResult& r) {
        os << name << ',' << format_number(r.value) << ',' << r.zero_probability.size() << '\n';
      };
      line("nonparametric", sample_cross_entropy(crosswalk, model));
      if (!train_path.empty()) {
        const auto all = read_records_csv(train_path);
        const auto ys = first_visits(filter_test(all, src.test_id));
        const auto zs = first_visits(filter_test(all, dst.test_id));
        std::vector<int> sy, sz;
        for (const auto& r : ys) sy.push_back(r.score);
        for (const auto& r : zs) sz.push_back(r.score);
        const ZScoreParams zp = ZScoreParams::estimate(sy, sz);
        const CovariateScheme pooled;
        line("zscore", sample_cross_entropy(crosswalk, {zscore_table(zp, src.branch.model().support(),
                                                                     dst.branch.model().support())},
                                            pooled));
        const auto py = fit_logit_normal(ys, intercept_design, src.branch.model());
        const auto pz = fit_logit_normal(zs, intercept_design, dst.branch.model());
        const int r = src.branch.discretized.bins();
        ConversionModel ln{{src.branch.discretized, {bin_logit_normal(py.beta[0], py.lambda, r)}},
                           {dst.branch.discretized, {bin_logit_normal(pz.beta[0], pz.lambda, r)}},
                           pooled};
        line("logit_normal", sample_cross_entropy(crosswalk, ln));
      }
      emit(g, "evaluate.csv", os.str());
      return 0;
    }

    if (*expc) {
      json j = g.config.empty() ? json::object() : load_json(g.config);
      if (exp_name.empty()) exp_name = j.value("experiment", "");
      if (exp_name.empty()) throw ConfigError("experiment name missing");
      ExperimentConfig cfg = ExperimentConfig::from_json(j, exp_name);
      if (g.seed) cfg.simulation.seed = *g.seed;
      if (reps) cfg.replicates = *reps;
      const RunReport report = run_experiment(cfg);
      if (g.out.empty()) {
        for (const auto& t : report.tables) {
          std::cout << "# " << t.name << '\n';
          report.write_table(std::cout, t);
        }
      } else {
        report.write(g.out);
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
