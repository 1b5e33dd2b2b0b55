// Simulation harness: the benchmark data-generating process, subspace
// accuracy metrics, and replication drivers for the MLE vs. PC comparison,
// the convergence-rate checks and the calibration of the plug-in standard
// errors.
//
// Every replication draws from its own generator, seeded by mixing
// (seed, cell index, replication index), so results do not depend on how
// replications are scheduled over threads. Aggregation runs in replication
// order after all work is done.
#ifndef FACTORML_MONTECARLO_HPP
#define FACTORML_MONTECARLO_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "factorml/em.hpp"
#include "factorml/model.hpp"

namespace factorml {

using Rng = std::mt19937_64;

/// lambda_i, f_t ~ N(0, I_r); sigma_i^2 = 0.1 + 10 U_i; e_it ~ N(0, sigma_i^2).
struct BaselineDgp {};

/// Element-wise draws for loadings and factors, per-variable draws for the
/// idiosyncratic variances; errors stay Gaussian.
struct CustomDgp {
  std::function<double(Rng&)> loading;
  std::function<double(Rng&)> factor;
  std::function<double(Rng&)> variance;
};

using Dgp = std::variant<BaselineDgp, CustomDgp>;

struct SimConfig {
  Eigen::Index n_vars = 100;
  Eigen::Index n_obs = 100;
  Eigen::Index n_factors = 2;
  int reps = 500;
  std::uint64_t seed = 20120101;
  Dgp dgp = BaselineDgp{};

  void validate() const;
};

struct SimDraw {
  Dataset data;
  Matrix loadings;  // N x r
  Matrix factors;   // T x r
  Vector idio_var;  // N
};

/// Generator for one replication; a pure function of its three arguments.
Rng replication_rng(std::uint64_t seed, std::uint64_t cell_index, std::uint64_t rep_index);

SimDraw generate(const SimConfig& cfg, std::uint64_t rep_index, std::uint64_t cell_index = 0);

/// Canonical correlations between the column spaces of A and B (no
/// centering), descending, each in [0, 1]. Throws RankError when either
/// matrix is column-rank deficient.
Vector canonical_correlations(const Matrix& a, const Matrix& b);

/// Squared Pearson correlation of two vectors.
double squared_correlation(const Vector& x, const Vector& y);

/// Squared uncentered correlation (x'y)^2 / (x'x y'y).
double squared_cosine(const Vector& x, const Vector& y);

/// Squared smallest classical canonical correlation: columns are centered
/// before the subspace comparison. Scores estimated from demeaned data have
/// zero column means while the simulated factors do not, so the uncentered
/// version understates the fit of the scores.
double subspace_fit(const Matrix& est, const Matrix& truth);

/// (1/N) || est H - truth ||^2 with H the least-squares rotation.
double aligned_mse(const Matrix& est, const Matrix& truth);

struct HarnessOptions {
  EMConfig em{};
  /// 0 uses FACTORML_THREADS or the hardware concurrency.
  int threads = 0;
  /// Share of failed replications above which a cell raises HarnessError.
  double max_failure_rate = 0.01;
};

using GridCell = std::pair<Eigen::Index, Eigen::Index>;  // (N, T)

struct CellStats {
  Eigen::Index n_vars = 0;
  Eigen::Index n_obs = 0;
  // Means over replications. Loadings and factors use subspace_fit;
  // variances use squared_cosine. These match the reference values in the
  // acceptance suite; uncentered canonical correlations and squared Pearson
  // correlations do not.
  double mle_loadings = 0.0;
  double mle_factors = 0.0;
  double mle_variances = 0.0;
  double pc_loadings = 0.0;
  double pc_factors = 0.0;
  double pc_variances = 0.0;
  // subspace_fit of the projection scores, for comparison with GLS.
  double mle_projection_factors = 0.0;
  int completed = 0;
  int failed = 0;
  int nonconverged = 0;
  int heywood = 0;
  long em_iterations = 0;
  long loglik_decreases = 0;  // steps that lowered the likelihood by more than 1e-10
  double max_loglik_decrease = 0.0;
};

struct MonteCarloReport {
  std::vector<CellStats> cells;
  int reps = 0;
  std::uint64_t seed = 0;
  double elapsed_seconds = 0.0;
};

/// T in {30, 50, 100} crossed with N in {10, 30, 50, 100, 150}.
std::vector<GridCell> comparison_grid();

MonteCarloReport run_comparison(const std::vector<GridCell>& grid, int reps, std::uint64_t seed,
                            const HarnessOptions& opts = {});

struct RateCell {
  Eigen::Index n_vars = 0;
  Eigen::Index n_obs = 0;
  double mle_mse = 0.0;  // mean aligned_mse of the MLE loadings
  double pc_mse = 0.0;   // mean aligned_mse of the PC loadings
  double median_score_gap = 0.0;
  int completed = 0;
  int failed = 0;
};

struct TwoTermFit {
  double inv_n = 0.0;  // coefficient on 1/N
  double inv_t = 0.0;  // coefficient on 1/T
};

struct RateReport {
  std::vector<RateCell> cells;
  int reps = 0;
  std::uint64_t seed = 0;
  double elapsed_seconds = 0.0;
};

RateReport run_rate_check(const std::vector<GridCell>& grid, int reps, std::uint64_t seed,
                          const HarnessOptions& opts = {});

/// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Least-squares fit of y = a/N + b/T without intercept.
TwoTermFit fit_two_term(const std::vector<RateCell>& cells, double RateCell::*field);

/// Plug-in vs. Monte Carlo second moments under IC3 with loadings, factors
/// and variances held fixed across replications. Two factors; column k of
/// the loadings is multiplied by loading_scale(k) when given.
///
/// With equally strong factors the gap between the IC3 diagonal entries is
/// only O(N^{-1/2}), and the noise in the estimated rotation then inflates
/// the loading and score variances well beyond the first-order plug-ins.
/// Unequal scales keep the rotation well determined.
struct CalibrationReport {
  double loading_var_empirical = 0.0;  // mean over (j, k) of Var(lambda_jk-hat)
  double loading_var_plugin = 0.0;     // mean over (j, k) and reps of sigma_j^2-hat / T
  double idio_var_empirical = 0.0;     // mean over j of Var(sigma_j^2-hat)
  double idio_var_plugin = 0.0;        // mean over j and reps of 2 sigma_j^4-hat / T
  Matrix score_cov_empirical;          // mean over t of Cov(f_t-hat)
  Matrix score_cov_plugin;             // mean over reps of Q-hat^{-1} / N
  double truth_eigen_gap = 0.0;        // relative gap of the IC3 diagonal of the truth
  int completed = 0;
  int failed = 0;
};

CalibrationReport calibrate_inference(Eigen::Index n_vars, Eigen::Index n_obs, int reps, std::uint64_t seed,
                                      const HarnessOptions& opts = {}, const Vector& loading_scale = {});

/// Runs body(0..count-1) on a pool of threads.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

}  // namespace factorml

#endif  // FACTORML_MONTECARLO_HPP
