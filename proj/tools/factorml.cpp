// factorml: fit, score, simulate and verify approximate factor models.
//
// Exit codes: 0 success, 1 input or usage error, 2 EM did not converge
// (fit; the result is still written) or an invariant failed (verify).
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "factorml/em.hpp"
#include "factorml/identify.hpp"
#include "factorml/inference.hpp"
#include "factorml/io.hpp"
#include "factorml/montecarlo.hpp"
#include "factorml/scores.hpp"

using namespace factorml;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kSoftFailure = 2;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out << text;
  if (!out) throw InvalidInput("write failed for " + path);
}

struct FitArgs {
  std::string csv;
  Eigen::Index factors = 0;
  std::string ic = "3";
  double tol = 1e-6;
  int max_iter = 5000;
  std::optional<std::uint64_t> seed;
  bool se = false;
  bool kurtosis = false;
  std::string out;
};

StandardErrors standard_errors(const FactorEstimate& e, const Dataset& d, bool kurtosis,
                               std::vector<std::string>& warnings) {
  StandardErrors se;
  const Eigen::Index n = e.params.n_vars(), r = e.params.n_factors();
  try {
    Matrix lse(n, r);
    for (Eigen::Index j = 0; j < n; ++j) lse.row(j) = loading_cov(e, j).cov.diagonal().cwiseSqrt().transpose();
    se.loadings = std::move(lse);
  } catch (const UnsupportedTag& ex) {
    warnings.push_back(std::string("loading standard errors omitted: ") + ex.what());
  }
  se.factor_cov = mff_cov(e);
  Vector kappa = kurtosis ? residual_excess_kurtosis(d, e.params) : Vector::Zero(n);
  se.kurtosis_adjusted = kurtosis;
  se.idio_var.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // Sample kurtosis can dip below the population bound in short panels.
    const double k = std::max(kappa(j), -2.0);
    se.idio_var(j) = std::sqrt(idio_var_cov(e, j, k));
  }
  if (kurtosis)
    warnings.push_back("idiosyncratic variance standard errors use kurtosis estimated from GLS-score residuals");
  return se;
}

int cmd_fit(const FitArgs& a) {
  Dataset data = read_csv(a.csv);
  const IdentificationTag tag = parse_tag(a.ic);
  EMConfig cfg;
  cfg.tol = a.tol;
  cfg.max_iter = a.max_iter;
  if (a.seed) cfg.init = RandomInit{*a.seed};

  FitResult result;
  result.estimate = to_ic(fit(data, a.factors, cfg), tag);
  if (a.se) result.se = standard_errors(result.estimate, data, a.kurtosis, result.estimate.warnings);
  write_text(a.out, dump(to_json(result)));
  for (const auto& w : result.estimate.warnings) std::cerr << "warning: " << w << '\n';
  return result.estimate.trace.converged ? kOk : kSoftFailure;
}

int cmd_scores(const std::string& csv, const std::string& model, const std::string& method,
               const std::string& out) {
  FitResult fitted = read_fit_result(model);
  Dataset data = read_csv(csv);
  if (data.n_vars() != fitted.estimate.params.n_vars()) {
    throw InvalidInput("data has " + std::to_string(data.n_vars()) + " variables but the model has " +
                       std::to_string(fitted.estimate.params.n_vars()));
  }
  const ScoreMethod m = method == "projection" ? ScoreMethod::Projection : ScoreMethod::Gls;
  FactorScores s = factor_scores(data, fitted.estimate.params, m);
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < s.values.cols(); ++k) header.push_back("f" + std::to_string(k + 1));
  std::ostringstream text;
  write_matrix_csv(text, s.values, header);
  write_text(out, text.str());
  return kOk;
}

std::vector<GridCell> parse_grid(const std::string& spec) {
  if (spec == "comparison") return comparison_grid();
  std::vector<GridCell> grid;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InvalidInput("grid cell '" + item + "' is not N:T");
    try {
      std::size_t used = 0;
      const long n = std::stol(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("N");
      const std::string rest = item.substr(colon + 1);
      const long t = std::stol(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("T");
      grid.emplace_back(n, t);
    } catch (const std::logic_error&) {
      throw InvalidInput("grid cell '" + item + "' is not N:T");
    }
  }
  if (grid.empty()) throw InvalidInput("empty grid");
  return grid;
}

struct SimulateArgs {
  std::string grid = "comparison";
  std::string kind = "comparison";
  int reps = 500;
  std::uint64_t seed = 20120101;
  int threads = 0;
  bool timing = false;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.reps < 1) throw InvalidInput("--reps must be at least 1");
  HarnessOptions opts;
  opts.threads = a.threads;
  const auto grid = parse_grid(a.grid);
  std::ostringstream csv;
  std::string doc;
  if (a.kind == "rate") {
    RateReport r = run_rate_check(grid, a.reps, a.seed, opts);
    csv << "N,T,MLE-MSE,PC-MSE,median-score-gap\n";
    for (const auto& c : r.cells) {
      csv << c.n_vars << ',' << c.n_obs << ',' << format_double(c.mle_mse) << ',' << format_double(c.pc_mse)
          << ',' << format_double(c.median_score_gap) << '\n';
    }
    doc = dump(to_json(r, a.timing));
    std::cerr << "elapsed " << r.elapsed_seconds << " s\n";
  } else {
    MonteCarloReport r = run_comparison(grid, a.reps, a.seed, opts);
    write_comparison_csv(csv, r);
    doc = dump(to_json(r, a.timing));
    std::cerr << "elapsed " << r.elapsed_seconds << " s\n";
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out + ".csv", csv.str());
    write_text(a.out + ".json", doc);
  }
  return kOk;
}

int cmd_verify(const std::string& model, const std::string& ic, double tol) {
  FitResult fitted = read_fit_result(model);
  const IdentificationTag tag = ic.empty() ? fitted.estimate.tag : parse_tag(ic);
  const auto checks = check_identification(fitted.estimate.params, tag, tol);
  std::cout << "checking " << model << " against " << to_string(tag) << '\n';
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  (violation " << format_double(c.value)
              << ", tolerance " << format_double(c.tolerance) << ")\n";
  }
  return all_passed(checks) ? kOk : kSoftFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-likelihood estimation of approximate factor models"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model by EM and write the result as JSON");
  fit_cmd->add_option("csv", fit_args.csv, "Panel CSV: rows are time points, columns are variables")->required();
  fit_cmd->add_option("-r,--factors", fit_args.factors, "Number of factors")->required()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--ic", fit_args.ic, "Identification condition 1-5")
      ->check(CLI::IsMember({"1", "2", "3", "4", "5", "IC1", "IC2", "IC3", "IC4", "IC5"}))
      ->capture_default_str();
  fit_cmd->add_option("--tol", fit_args.tol, "Relative parameter-change tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iter", fit_args.max_iter, "Iteration cap")->capture_default_str();
  fit_cmd->add_option("--seed", fit_args.seed, "Start from random loadings drawn with this seed instead of PCA");
  fit_cmd->add_flag("--se", fit_args.se, "Attach plug-in standard errors");
  fit_cmd->add_flag("--kurtosis", fit_args.kurtosis, "Adjust variance standard errors for residual kurtosis");
  fit_cmd->add_option("-o,--out", fit_args.out, "Output file (default stdout)");

  std::string sc_csv, sc_model, sc_method = "gls", sc_out;
  auto* scores_cmd = app.add_subcommand("scores", "Compute factor scores from a fitted model");
  scores_cmd->add_option("csv", sc_csv, "Panel CSV")->required();
  scores_cmd->add_option("-m,--model", sc_model, "Model JSON written by 'fit'")->required();
  scores_cmd->add_option("--method", sc_method, "gls or projection")
      ->check(CLI::IsMember({"gls", "projection"}))
      ->capture_default_str();
  scores_cmd->add_option("-o,--out", sc_out, "Output CSV (default stdout)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the Monte Carlo comparison of ML and PC estimates");
  sim_cmd->add_option("--grid", sim.grid, "'comparison' or a list such as 100:50,100:100")->capture_default_str();
  sim_cmd->add_option("--kind", sim.kind, "comparison or rate")
      ->check(CLI::IsMember({"comparison", "rate"}))
      ->capture_default_str();
  sim_cmd->add_option("--reps", sim.reps, "Replications per cell")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0: FACTORML_THREADS or all cores)");
  sim_cmd->add_flag("--timing", sim.timing, "Record elapsed time in the JSON report");
  sim_cmd->add_option("-o,--out", sim.out, "Output prefix; writes PREFIX.csv and PREFIX.json");

  std::string vf_model, vf_ic;
  double vf_tol = 1e-8;
  auto* verify_cmd = app.add_subcommand("verify", "Check a model against an identification condition");
  verify_cmd->add_option("model", vf_model, "Model JSON")->required();
  verify_cmd->add_option("--ic", vf_ic, "Condition to check (default: the model's own)")
      ->check(CLI::IsMember({"1", "2", "3", "4", "5", "IC1", "IC2", "IC3", "IC4", "IC5"}));
  verify_cmd->add_option("--tol", vf_tol, "Relative tolerance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_args);
    if (*scores_cmd) return cmd_scores(sc_csv, sc_model, sc_method, sc_out);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*verify_cmd) return cmd_verify(vf_model, vf_ic, vf_tol);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
