#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "covtune/covfit.hpp"
#include "covtune/errors.hpp"
#include "covtune/estimators.hpp"
#include "covtune/experiments.hpp"
#include "covtune/io.hpp"
#include "covtune/linalg.hpp"
#include "covtune/solvers.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitSolver = 3;
constexpr int kExitInput = 4;

covtune::CovStructure parse_structure(const std::string& name) {
  if (name == "scaled-identity") {
    return covtune::CovStructure::ScaledIdentity;
  }
  if (name == "diagonal") {
    return covtune::CovStructure::Diagonal;
  }
  if (name == "unstructured") {
    return covtune::CovStructure::Unstructured;
  }
  throw covtune::InvalidInputError("unknown structure '" + name +
                                   "' (expected scaled-identity, diagonal or unstructured)");
}

struct EstimatorName {
  const char* config_name;
  const char* file_tag;
  covtune::CovStructure s_c;
  covtune::CovStructure s_v;
};

constexpr EstimatorName kEstimators[] = {
    {"l2-l2", "l2l2", covtune::CovStructure::ScaledIdentity, covtune::CovStructure::ScaledIdentity},
    {"l1-l2", "l1l2", covtune::CovStructure::ScaledIdentity, covtune::CovStructure::Diagonal},
    {"l2-wl1", "l2wl1", covtune::CovStructure::Diagonal, covtune::CovStructure::ScaledIdentity},
    {"l1-wl1", "l1wl1", covtune::CovStructure::Diagonal, covtune::CovStructure::Diagonal},
};

const EstimatorName& lookup_estimator(const std::string& name) {
  for (const auto& e : kEstimators) {
    if (name == e.config_name) {
      return e;
    }
  }
  throw covtune::InvalidInputError("config: unknown estimator '" + name +
                                   "' (expected l2-l2, l1-l2, l2-wl1 or l1-wl1)");
}

void print_report_diagnostics(const covtune::EstimateReport& rep) {
  std::printf("objective            %s\n", covtune::format_double(rep.objective).c_str());
  std::printf("feasibility gap      %s\n",
              covtune::format_double(rep.residual_range_gap).c_str());
  for (const auto& w : rep.warnings) {
    std::printf("warning: %s\n", w.c_str());
  }
}

void write_weight_csv(const std::string& path, const covtune::PsdMatrix& w,
                      covtune::CovStructure s, const std::string& prefix) {
  if (s == covtune::CovStructure::Unstructured) {
    std::vector<std::string> headers;
    headers.reserve(static_cast<std::size_t>(w.dim()));
    for (Eigen::Index i = 0; i < w.dim(); ++i) {
      headers.push_back(prefix + std::to_string(i + 1));
    }
    covtune::write_matrix_csv(path, w.entries(), headers);
  } else {
    covtune::write_vector_csv(path, w.entries().diagonal(), prefix + "diag");
  }
}

int cmd_fit(const std::string& x_path, const std::string& y_path,
            const std::optional<std::string>& c_path, const std::optional<std::string>& v_path,
            bool use_blue, const std::string& out_dir) {
  const covtune::Dataset data(covtune::read_matrix_csv(x_path),
                              covtune::read_vector_csv(y_path));
  covtune::EstimateReport rep;
  if (use_blue) {
    if (!v_path) {
      throw covtune::InvalidInputError("fit --blue requires --v");
    }
    rep = covtune::blue(covtune::PsdMatrix(covtune::read_matrix_csv(*v_path)), data);
  } else {
    if (!c_path || !v_path) {
      throw covtune::InvalidInputError("fit requires --c and --v (or --blue with --v)");
    }
    covtune::WeightPair w;
    w.C = covtune::PsdMatrix(covtune::read_matrix_csv(*c_path));
    w.V = covtune::PsdMatrix(covtune::read_matrix_csv(*v_path));
    rep = covtune::estimate_weighted(w, data);
  }
  covtune::write_vector_csv((fs::path(out_dir) / "theta.csv").string(), rep.theta, "theta");
  print_report_diagnostics(rep);
  std::printf("theta written to %s\n", (fs::path(out_dir) / "theta.csv").string().c_str());
  return kExitOk;
}

int cmd_tune(const std::string& x_path, const std::string& y_path, const std::string& sc_name,
             const std::string& sv_name, const std::optional<double>& lambda_override,
             const covtune::SolverOptions& opts, const std::string& out_dir) {
  const covtune::Dataset data(covtune::read_matrix_csv(x_path),
                              covtune::read_vector_csv(y_path));
  const auto s_c = parse_structure(sc_name);
  const auto s_v = parse_structure(sv_name);
  const auto rep = covtune::tuned_estimate(s_c, s_v, data, opts, lambda_override);

  covtune::write_vector_csv((fs::path(out_dir) / "theta.csv").string(), rep.theta, "theta");
  write_weight_csv((fs::path(out_dir) / "c_hat.csv").string(), rep.weights_used->C, s_c, "c_");
  write_weight_csv((fs::path(out_dir) / "v_hat.csv").string(), rep.weights_used->V, s_v, "v_");

  ordered_json j;
  j["structure_c"] = covtune::to_string(s_c);
  j["structure_v"] = covtune::to_string(s_v);
  if (lambda_override) {
    j["lambda_override"] = *lambda_override;
  }
  j["objective"] = rep.objective;
  j["feasibility_gap"] = rep.residual_range_gap;
  j["solver_iterations"] = rep.solver_iterations;
  if (rep.fit_identity_residual) {
    j["identity_residual"] = *rep.fit_identity_residual;
  }
  if (rep.roundtrip_gap) {
    j["roundtrip_gap"] = *rep.roundtrip_gap;
  }
  j["warnings"] = rep.warnings;
  covtune::atomic_write_text((fs::path(out_dir) / "tune_report.json").string(),
                             j.dump(2) + "\n");

  print_report_diagnostics(rep);
  if (rep.fit_identity_residual) {
    std::printf("identity residual    %s\n",
                covtune::format_double(*rep.fit_identity_residual).c_str());
  }
  std::printf("outputs written to %s\n", out_dir.c_str());
  return kExitOk;
}

int cmd_lambda(const std::string& x_path, const std::string& sc_name) {
  const Eigen::MatrixXd x = covtune::read_matrix_csv(x_path);
  const double lambda = covtune::tuned_lambda(parse_structure(sc_name), x);
  std::printf("%s\n", covtune::format_double(lambda).c_str());
  return kExitOk;
}

// ----- experiment config ---------------------------------------------------

struct ExperimentConfig {
  std::vector<int> cases{1, 2, 3};
  covtune::ExperimentCase base;  // n, d, snr, sparsity, outliers, seed
  int trials = 200;
  std::vector<std::string> estimators{"l2-l2", "l1-l2", "l2-wl1", "l1-wl1"};
  std::vector<double> lambdas = covtune::default_lambda_grid();
  std::string out = "covtune_experiment";
  int threads = 0;
  covtune::SolverOptions solver;

  ExperimentConfig() {
    solver.objective_tol = 1e-6;  // matches CurveOptions
    solver.max_iterations = 300000;
  }
};

template <typename T>
T get_number(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) {
    throw covtune::InvalidInputError("config: key '" + key + "' must be a number");
  }
  return j.get<T>();
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw covtune::IoError(path + ": cannot open for reading");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw covtune::IoError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) {
    throw covtune::InvalidInputError("config: top level must be a JSON object");
  }

  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "case") {
      cfg.cases = {get_number<int>(value, key)};
    } else if (key == "cases") {
      if (!value.is_array() || value.empty()) {
        throw covtune::InvalidInputError("config: key 'cases' must be a nonempty array");
      }
      cfg.cases.clear();
      for (const auto& c : value) {
        cfg.cases.push_back(get_number<int>(c, key));
      }
    } else if (key == "n") {
      cfg.base.n = get_number<int>(value, key);
    } else if (key == "d") {
      cfg.base.d = get_number<int>(value, key);
    } else if (key == "snr") {
      cfg.base.snr = get_number<double>(value, key);
    } else if (key == "sparsity") {
      cfg.base.sparsity = get_number<int>(value, key);
    } else if (key == "outlier_count") {
      cfg.base.outlier_count = get_number<int>(value, key);
    } else if (key == "outlier_variance") {
      cfg.base.outlier_variance = get_number<double>(value, key);
    } else if (key == "seed") {
      cfg.base.seed = get_number<std::uint64_t>(value, key);
    } else if (key == "trials") {
      cfg.trials = get_number<int>(value, key);
      if (cfg.trials < 1) {
        throw covtune::InvalidInputError("config: key 'trials' must be a positive integer");
      }
    } else if (key == "estimators") {
      if (!value.is_array() || value.empty()) {
        throw covtune::InvalidInputError("config: key 'estimators' must be a nonempty array");
      }
      cfg.estimators.clear();
      for (const auto& e : value) {
        if (!e.is_string()) {
          throw covtune::InvalidInputError("config: key 'estimators' must contain strings");
        }
        lookup_estimator(e.get<std::string>());
        cfg.estimators.push_back(e.get<std::string>());
      }
    } else if (key == "lambdas") {
      if (!value.is_array() || value.empty()) {
        throw covtune::InvalidInputError("config: key 'lambdas' must be a nonempty array");
      }
      cfg.lambdas.clear();
      for (const auto& l : value) {
        cfg.lambdas.push_back(get_number<double>(l, key));
      }
    } else if (key == "out") {
      if (!value.is_string()) {
        throw covtune::InvalidInputError("config: key 'out' must be a string");
      }
      cfg.out = value.get<std::string>();
    } else if (key == "threads") {
      cfg.threads = get_number<int>(value, key);
    } else if (key == "solver") {
      if (!value.is_object()) {
        throw covtune::InvalidInputError("config: key 'solver' must be an object");
      }
      for (const auto& [skey, sval] : value.items()) {
        if (skey == "max_iterations") {
          cfg.solver.max_iterations = get_number<int>(sval, skey);
        } else if (skey == "objective_tol") {
          cfg.solver.objective_tol = get_number<double>(sval, skey);
        } else {
          throw covtune::InvalidInputError("config: unknown solver key '" + skey + "'");
        }
      }
    } else {
      throw covtune::InvalidInputError("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

int cmd_experiment(const std::string& config_path, const std::optional<std::string>& out_override,
                   const std::optional<int>& trials_override,
                   const std::optional<std::uint64_t>& seed_override) {
  ExperimentConfig cfg = parse_experiment_config(config_path);
  if (out_override) {
    cfg.out = *out_override;
  }
  if (trials_override) {
    cfg.trials = *trials_override;
  }
  if (seed_override) {
    cfg.base.seed = *seed_override;
  }

  fs::create_directories(cfg.out);

  covtune::CurveOptions copts;
  copts.solver = cfg.solver;
  copts.threads = cfg.threads;

  ordered_json summary;
  summary["config"] = {{"cases", cfg.cases},
                       {"n", cfg.base.n},
                       {"d", cfg.base.d},
                       {"snr", cfg.base.snr},
                       {"sparsity", cfg.base.resolved_sparsity()},
                       {"outlier_count", cfg.base.outlier_count},
                       {"outlier_variance", cfg.base.outlier_variance},
                       {"seed", cfg.base.seed},
                       {"trials", cfg.trials},
                       {"estimators", cfg.estimators},
                       {"lambda_count", cfg.lambdas.size()},
                       {"solver",
                        {{"max_iterations", cfg.solver.max_iterations},
                         {"objective_tol", cfg.solver.objective_tol}}}};
  summary["results"] = ordered_json::array();

  std::printf("%-6s %-8s %12s %12s %12s %12s %12s\n", "case", "estim", "tuned_lambda",
              "tuned_nmse", "oracle_nmse", "min_nmse", "argmin");
  for (int case_id : cfg.cases) {
    covtune::ExperimentCase spec = cfg.base;
    spec.case_id = case_id;
    for (const auto& est_name : cfg.estimators) {
      const EstimatorName& est = lookup_estimator(est_name);
      const covtune::NmseCurve curve =
          covtune::nmse_curve(spec, est.s_c, est.s_v, cfg.lambdas, cfg.trials, copts);

      const std::string stem = "case" + std::to_string(case_id) + "_" + est.file_tag;
      covtune::write_curve_csv(curve, (fs::path(cfg.out) / (stem + ".csv")).string());
      covtune::write_curve_metadata(curve, spec, est.s_c, est.s_v,
                                    (fs::path(cfg.out) / (stem + ".meta.json")).string());

      std::size_t arg = 0;
      for (std::size_t i = 1; i < curve.nmse.size(); ++i) {
        if (curve.nmse[i] < curve.nmse[arg]) {
          arg = i;
        }
      }
      ordered_json row;
      row["case"] = case_id;
      row["estimator"] = est_name;
      row["tuned_lambda"] = curve.tuned_lambda;
      row["tuned_nmse"] = curve.tuned_nmse;
      row["tuned_stderr"] = curve.tuned_stderr;
      row["oracle_nmse"] = curve.oracle_nmse;
      row["min_nmse"] = curve.nmse[arg];
      row["argmin_lambda"] = curve.lambdas[arg];
      row["failed_trials"] = curve.failed_trials;
      row["curve_file"] = stem + ".csv";
      summary["results"].push_back(row);

      std::printf("%-6d %-8s %12.5g %12.5g %12.5g %12.5g %12.5g\n", case_id, est_name.c_str(),
                  curve.tuned_lambda, curve.tuned_nmse, curve.oracle_nmse, curve.nmse[arg],
                  curve.lambdas[arg]);
    }
  }
  covtune::atomic_write_text((fs::path(cfg.out) / "summary.json").string(),
                             summary.dump(2) + "\n");
  std::printf("summary written to %s\n", (fs::path(cfg.out) / "summary.json").string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tuned regularized linear estimators via covariance fitting"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "Weighted estimate from explicit weight matrices");
  std::string fit_x, fit_y, fit_out = ".";
  std::optional<std::string> fit_c, fit_v;
  bool fit_blue = false;
  fit->add_option("--x", fit_x, "regressor matrix CSV (rows = observations)")->required();
  fit->add_option("--y", fit_y, "response vector CSV")->required();
  fit->add_option("--c", fit_c, "prior weight matrix CSV (d x d)");
  fit->add_option("--v", fit_v, "noise weight matrix CSV (n x n)");
  fit->add_flag("--blue", fit_blue, "best linear unbiased estimate (needs --v only)");
  fit->add_option("--out", fit_out, "output directory");

  // tune
  auto* tune = app.add_subcommand("tune", "Tuned estimate with fitted weight matrices");
  std::string tune_x, tune_y, tune_sc, tune_sv, tune_out = ".";
  std::optional<double> tune_lambda;
  covtune::SolverOptions tune_opts;
  tune->add_option("--x", tune_x, "regressor matrix CSV")->required();
  tune->add_option("--y", tune_y, "response vector CSV")->required();
  tune->add_option("--structure-c", tune_sc,
                   "prior weight structure: scaled-identity | diagonal | unstructured")
      ->required();
  tune->add_option("--structure-v", tune_sv,
                   "noise weight structure: scaled-identity | diagonal")
      ->required();
  tune->add_option("--lambda", tune_lambda, "override the tuned regularization parameter");
  tune->add_option("--max-iterations", tune_opts.max_iterations, "solver iteration cap");
  tune->add_option("--tol", tune_opts.objective_tol, "solver relative duality-gap tolerance");
  tune->add_option("--out", tune_out, "output directory");

  // lambda
  auto* lam = app.add_subcommand("lambda", "Print the tuned regularization parameter");
  std::string lam_x, lam_sc;
  lam->add_option("--x", lam_x, "regressor matrix CSV")->required();
  lam->add_option("--structure-c", lam_sc, "prior weight structure")->required();

  // experiment
  auto* exp = app.add_subcommand("experiment", "Monte Carlo NMSE sweeps over the three cases");
  std::string exp_config;
  std::optional<std::string> exp_out;
  std::optional<int> exp_trials;
  std::optional<std::uint64_t> exp_seed;
  exp->add_option("--config", exp_config, "JSON configuration file")->required();
  exp->add_option("--out", exp_out, "output directory (overrides the config)");
  exp->add_option("--trials", exp_trials, "Monte Carlo trials (overrides the config)");
  exp->add_option("--seed", exp_seed, "base RNG seed (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*fit) {
      return cmd_fit(fit_x, fit_y, fit_c, fit_v, fit_blue, fit_out);
    }
    if (*tune) {
      return cmd_tune(tune_x, tune_y, tune_sc, tune_sv, tune_lambda, tune_opts, tune_out);
    }
    if (*lam) {
      return cmd_lambda(lam_x, lam_sc);
    }
    if (*exp) {
      return cmd_experiment(exp_config, exp_out, exp_trials, exp_seed);
    }
  } catch (const covtune::InfeasibleError& e) {
    std::fprintf(stderr, "error (infeasible): %s\n", e.what());
    return kExitInfeasible;
  } catch (const covtune::SolverError& e) {
    std::fprintf(stderr, "error (solver): %s\n", e.what());
    return kExitSolver;
  } catch (const covtune::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
