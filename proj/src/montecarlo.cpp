#include "factorml/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "factorml/identify.hpp"
#include "factorml/pca.hpp"
#include "factorml/scores.hpp"

namespace factorml {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FACTORML_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

void SimConfig::validate() const {
  if (reps < 1) throw InvalidInput("reps must be at least 1");
  if (n_factors < 1 || n_factors >= std::min(n_vars, n_obs)) throw InvalidInput("need 1 <= r < min(N, T)");
  if (const auto* c = std::get_if<CustomDgp>(&dgp))
    if (!c->loading || !c->factor || !c->variance) throw InvalidInput("custom DGP needs all three draws");
}

Rng replication_rng(std::uint64_t seed, std::uint64_t cell_index, std::uint64_t rep_index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(cell_index + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ splitmix64(rep_index + 0x8CB92BA72F3D8DD7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

SimDraw generate(const SimConfig& cfg, std::uint64_t rep_index, std::uint64_t cell_index) {
  if (cfg.n_factors < 1 || cfg.n_factors >= std::min(cfg.n_vars, cfg.n_obs))
    throw InvalidInput("need 1 <= r < min(N, T)");
  Rng rng = replication_rng(cfg.seed, cell_index, rep_index);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::function<double(Rng&)> draw_loading = [&](Rng& g) { return normal(g); };
  std::function<double(Rng&)> draw_factor = draw_loading;
  std::function<double(Rng&)> draw_variance = [&](Rng& g) { return 0.1 + 10.0 * uniform(g); };
  if (const auto* c = std::get_if<CustomDgp>(&cfg.dgp)) {
    draw_loading = c->loading;
    draw_factor = c->factor;
    draw_variance = c->variance;
  }

  const Eigen::Index n = cfg.n_vars, t = cfg.n_obs, r = cfg.n_factors;
  Matrix loadings(n, r);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < r; ++k) loadings(i, k) = draw_loading(rng);
  Matrix factors(t, r);
  for (Eigen::Index s = 0; s < t; ++s)
    for (Eigen::Index k = 0; k < r; ++k) factors(s, k) = draw_factor(rng);
  Vector idio(n);
  for (Eigen::Index i = 0; i < n; ++i) idio(i) = draw_variance(rng);

  Matrix z = loadings * factors.transpose();
  for (Eigen::Index s = 0; s < t; ++s)
    for (Eigen::Index i = 0; i < n; ++i) z(i, s) += std::sqrt(idio(i)) * normal(rng);
  return {Dataset(std::move(z)), std::move(loadings), std::move(factors), std::move(idio)};
}

namespace {

Matrix orthonormal_basis(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 1e-12 * sv(0)))
    throw RankError("canonical correlation input is column-rank deficient");
  return svd.matrixU();
}

}  // namespace

Vector canonical_correlations(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("canonical correlation inputs need the same number of rows");
  Matrix ua = orthonormal_basis(a);
  Matrix ub = orthonormal_basis(b);
  Eigen::JacobiSVD<Matrix> svd(ua.transpose() * ub);
  Vector out = svd.singularValues();
  for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = std::clamp(out(k), 0.0, 1.0);
  return out;
}

double squared_correlation(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("correlation needs two vectors of equal length >= 2");
  Vector xc = x.array() - x.mean();
  Vector yc = y.array() - y.mean();
  const double denom = xc.squaredNorm() * yc.squaredNorm();
  if (!(denom > 0.0)) return 0.0;
  const double c = xc.dot(yc);
  return std::clamp(c * c / denom, 0.0, 1.0);
}

double squared_cosine(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 1) throw InvalidInput("cosine needs two vectors of equal length");
  const double denom = x.squaredNorm() * y.squaredNorm();
  if (!(denom > 0.0)) return 0.0;
  const double c = x.dot(y);
  return std::clamp(c * c / denom, 0.0, 1.0);
}

double subspace_fit(const Matrix& est, const Matrix& truth) {
  Matrix a = est.rowwise() - est.colwise().mean();
  Matrix b = truth.rowwise() - truth.colwise().mean();
  const double rho = canonical_correlations(a, b).minCoeff();
  return rho * rho;
}

double aligned_mse(const Matrix& est, const Matrix& truth) {
  if (est.rows() != truth.rows()) throw InvalidInput("aligned_mse needs matrices with the same rows");
  Matrix h = est.colPivHouseholderQr().solve(truth);
  return (est * h - truth).squaredNorm() / static_cast<double>(est.rows());
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  const int workers = std::min(resolve_threads(threads), std::max(count, 1));
  if (workers <= 1) {
    for (int k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int k = next++; k < count; k = next++) body(k);
    });
  for (auto& th : pool) th.join();
}

std::vector<GridCell> comparison_grid() {
  std::vector<GridCell> grid;
  for (Eigen::Index t : {30, 50, 100})
    for (Eigen::Index n : {10, 30, 50, 100, 150}) grid.emplace_back(n, t);
  return grid;
}

namespace {

struct ComparisonRep {
  bool ok = false;
  double stats[7] = {0, 0, 0, 0, 0, 0, 0};
  bool converged = false;
  bool heywood = false;
  int iterations = 0;
  long decreases = 0;
  double max_decrease = 0.0;
};

void check_failures(int failed, int reps, double max_rate, Eigen::Index n, Eigen::Index t) {
  if (static_cast<double>(failed) > max_rate * static_cast<double>(reps)) {
    throw HarnessError("cell (N=" + std::to_string(n) + ", T=" + std::to_string(t) + "): " +
                       std::to_string(failed) + " of " + std::to_string(reps) + " replications failed");
  }
}

}  // namespace

MonteCarloReport run_comparison(const std::vector<GridCell>& grid, int reps, std::uint64_t seed,
                            const HarnessOptions& opts) {
  if (reps < 1) throw InvalidInput("reps must be at least 1");
  if (grid.empty()) throw InvalidInput("grid is empty");
  const auto start = std::chrono::steady_clock::now();
  MonteCarloReport report;
  report.reps = reps;
  report.seed = seed;

  for (std::size_t c = 0; c < grid.size(); ++c) {
    SimConfig cfg;
    cfg.n_vars = grid[c].first;
    cfg.n_obs = grid[c].second;
    cfg.n_factors = 2;
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.validate();

    std::vector<ComparisonRep> results(static_cast<std::size_t>(reps));
    parallel_for(reps, opts.threads, [&](int k) {
      ComparisonRep& out = results[static_cast<std::size_t>(k)];
      try {
        SimDraw draw = generate(cfg, static_cast<std::uint64_t>(k), c);
        FactorEstimate est = fit(draw.data, cfg.n_factors, opts.em);
        PcFit pc = pc_fit(draw.data, cfg.n_factors);
        Matrix mle_scores = gls_scores(draw.data, est.params).values;
        Matrix proj_scores = projection_scores(draw.data, est.params).values;
        out.stats[0] = subspace_fit(est.params.loadings, draw.loadings);
        out.stats[1] = subspace_fit(mle_scores, draw.factors);
        out.stats[2] = squared_cosine(est.params.idio_var, draw.idio_var);
        out.stats[3] = subspace_fit(pc.loadings, draw.loadings);
        out.stats[4] = subspace_fit(pc.scores, draw.factors);
        out.stats[5] = squared_cosine(pc.idio_var, draw.idio_var);
        out.stats[6] = subspace_fit(proj_scores, draw.factors);
        out.converged = est.trace.converged;
        out.heywood = est.trace.heywood;
        out.iterations = est.trace.iterations;
        const auto& path = est.trace.loglik_path;
        for (std::size_t s = 1; s < path.size(); ++s) {
          const double drop = path[s - 1] - path[s];
          if (drop > 1e-10) ++out.decreases;
          out.max_decrease = std::max(out.max_decrease, drop);
        }
        out.ok = true;
      } catch (const FactorError&) {
        out.ok = false;
      }
    });

    CellStats cell;
    cell.n_vars = cfg.n_vars;
    cell.n_obs = cfg.n_obs;
    double sums[7] = {0, 0, 0, 0, 0, 0, 0};
    for (const auto& rep : results) {
      if (!rep.ok) {
        ++cell.failed;
        continue;
      }
      ++cell.completed;
      for (int s = 0; s < 7; ++s) sums[s] += rep.stats[s];
      if (!rep.converged) ++cell.nonconverged;
      if (rep.heywood) ++cell.heywood;
      cell.em_iterations += rep.iterations;
      cell.loglik_decreases += rep.decreases;
      cell.max_loglik_decrease = std::max(cell.max_loglik_decrease, rep.max_decrease);
    }
    check_failures(cell.failed, reps, opts.max_failure_rate, cell.n_vars, cell.n_obs);
    const double m = static_cast<double>(cell.completed);
    cell.mle_loadings = sums[0] / m;
    cell.mle_factors = sums[1] / m;
    cell.mle_variances = sums[2] / m;
    cell.pc_loadings = sums[3] / m;
    cell.pc_factors = sums[4] / m;
    cell.pc_variances = sums[5] / m;
    cell.mle_projection_factors = sums[6] / m;
    report.cells.push_back(cell);
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

RateReport run_rate_check(const std::vector<GridCell>& grid, int reps, std::uint64_t seed,
                          const HarnessOptions& opts) {
  if (reps < 1) throw InvalidInput("reps must be at least 1");
  if (grid.empty()) throw InvalidInput("grid is empty");
  RateReport report;
  report.reps = reps;
  report.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    SimConfig cfg;
    cfg.n_vars = grid[c].first;
    cfg.n_obs = grid[c].second;
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.validate();

    struct Rep {
      bool ok = false;
      double mle = 0.0, pc = 0.0, gap = 0.0;
    };
    std::vector<Rep> results(static_cast<std::size_t>(reps));
    parallel_for(reps, opts.threads, [&](int k) {
      Rep& out = results[static_cast<std::size_t>(k)];
      try {
        SimDraw draw = generate(cfg, static_cast<std::uint64_t>(k), c);
        FactorEstimate est = fit(draw.data, cfg.n_factors, opts.em);
        PcFit pc = pc_fit(draw.data, cfg.n_factors);
        out.mle = aligned_mse(est.params.loadings, draw.loadings);
        out.pc = aligned_mse(pc.loadings, draw.loadings);
        out.gap = score_gap(draw.data, est.params);
        out.ok = true;
      } catch (const FactorError&) {
        out.ok = false;
      }
    });

    RateCell cell;
    cell.n_vars = cfg.n_vars;
    cell.n_obs = cfg.n_obs;
    std::vector<double> gaps;
    for (const auto& rep : results) {
      if (!rep.ok) {
        ++cell.failed;
        continue;
      }
      ++cell.completed;
      cell.mle_mse += rep.mle;
      cell.pc_mse += rep.pc;
      gaps.push_back(rep.gap);
    }
    check_failures(cell.failed, reps, opts.max_failure_rate, cell.n_vars, cell.n_obs);
    cell.mle_mse /= cell.completed;
    cell.pc_mse /= cell.completed;
    std::sort(gaps.begin(), gaps.end());
    const std::size_t mid = gaps.size() / 2;
    cell.median_score_gap = gaps.size() % 2 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
    report.cells.push_back(cell);
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("slope needs two equal-length series");
  const auto n = static_cast<Eigen::Index>(x.size());
  Vector lx(n), ly(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(x[static_cast<std::size_t>(k)] > 0.0) || !(y[static_cast<std::size_t>(k)] > 0.0))
      throw InvalidInput("log-log slope needs positive values");
    lx(k) = std::log(x[static_cast<std::size_t>(k)]);
    ly(k) = std::log(y[static_cast<std::size_t>(k)]);
  }
  Vector xc = lx.array() - lx.mean();
  Vector yc = ly.array() - ly.mean();
  return xc.dot(yc) / xc.squaredNorm();
}

TwoTermFit fit_two_term(const std::vector<RateCell>& cells, double RateCell::*field) {
  if (cells.size() < 2) throw InvalidInput("two-term fit needs at least two cells");
  const auto m = static_cast<Eigen::Index>(cells.size());
  Matrix x(m, 2);
  Vector y(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const RateCell& c = cells[static_cast<std::size_t>(k)];
    x(k, 0) = 1.0 / static_cast<double>(c.n_vars);
    x(k, 1) = 1.0 / static_cast<double>(c.n_obs);
    y(k) = c.*field;
  }
  Vector coef = x.colPivHouseholderQr().solve(y);
  return {coef(0), coef(1)};
}

CalibrationReport calibrate_inference(Eigen::Index n_vars, Eigen::Index n_obs, int reps, std::uint64_t seed,
                                      const HarnessOptions& opts, const Vector& loading_scale) {
  if (reps < 2) throw InvalidInput("calibration needs at least two replications");
  const Eigen::Index r = 2;
  SimConfig cfg;
  cfg.n_vars = n_vars;
  cfg.n_obs = n_obs;
  cfg.n_factors = r;
  cfg.reps = reps;
  cfg.seed = seed;
  cfg.validate();

  // Fixed design: loadings, factors and variances from one draw.
  SimDraw design = generate(cfg, 0, 0xCA11B);
  if (loading_scale.size() != 0) {
    if (loading_scale.size() != r || !(loading_scale.array() > 0.0).all())
      throw InvalidInput("loading_scale needs r positive entries");
    design.loadings = design.loadings * loading_scale.asDiagonal();
  }
  Matrix factors = design.factors.rowwise() - design.factors.colwise().mean();
  FactorParams truth;
  truth.loadings = design.loadings;
  truth.idio_var = design.idio_var;
  truth.factor_cov = factors.transpose() * factors / static_cast<double>(n_obs);
  Ic3Rotation rot = rotate_to_ic3(truth);
  const Matrix& loadings_ic3 = rot.params.loadings;

  CalibrationReport report;
  report.truth_eigen_gap = (rot.diagonal(0) - rot.diagonal(1)) / rot.diagonal(0);

  struct Rep {
    bool ok = false;
    Matrix loadings;
    Vector idio;
    Matrix scores;
    Matrix score_plugin;
  };
  std::vector<Rep> results(static_cast<std::size_t>(reps));
  const Matrix signal = design.loadings * design.factors.transpose();
  parallel_for(reps, opts.threads, [&](int k) {
    Rep& out = results[static_cast<std::size_t>(k)];
    try {
      Rng rng = replication_rng(seed, 1, static_cast<std::uint64_t>(k));
      std::normal_distribution<double> normal(0.0, 1.0);
      Matrix z = signal;
      for (Eigen::Index s = 0; s < n_obs; ++s)
        for (Eigen::Index i = 0; i < n_vars; ++i) z(i, s) += std::sqrt(design.idio_var(i)) * normal(rng);
      Dataset data(std::move(z));
      FactorEstimate est = fit(data, r, opts.em);
      Vector signs = align_to_truth(est.params.loadings, loadings_ic3);
      out.loadings = est.params.loadings * signs.asDiagonal();
      out.idio = est.params.idio_var;
      FactorParams aligned = est.params;
      aligned.loadings = out.loadings;
      out.scores = gls_scores(data, aligned).values;
      const double n = static_cast<double>(n_vars);
      Matrix q = aligned.loadings.transpose() * aligned.idio_var.cwiseInverse().asDiagonal() * aligned.loadings / n;
      out.score_plugin = q.inverse() / n;
      out.ok = true;
    } catch (const FactorError&) {
      out.ok = false;
    }
  });

  Matrix load_sum = Matrix::Zero(n_vars, r), load_sq = Matrix::Zero(n_vars, r);
  Vector idio_sum = Vector::Zero(n_vars), idio_sq = Vector::Zero(n_vars);
  Matrix score_sum = Matrix::Zero(n_obs, r);
  std::vector<Matrix> score_outer(static_cast<std::size_t>(n_obs), Matrix::Zero(r, r));
  double loading_plugin = 0.0, idio_plugin = 0.0;
  Matrix score_plugin = Matrix::Zero(r, r);
  for (const auto& rep : results) {
    if (!rep.ok) {
      ++report.failed;
      continue;
    }
    ++report.completed;
    load_sum += rep.loadings;
    load_sq += rep.loadings.cwiseProduct(rep.loadings);
    idio_sum += rep.idio;
    idio_sq += rep.idio.cwiseProduct(rep.idio);
    score_sum += rep.scores;
    for (Eigen::Index s = 0; s < n_obs; ++s) {
      Vector f = rep.scores.row(s).transpose();
      score_outer[static_cast<std::size_t>(s)] += f * f.transpose();
    }
    loading_plugin += rep.idio.mean() / static_cast<double>(n_obs);
    idio_plugin += 2.0 * rep.idio.cwiseProduct(rep.idio).mean() / static_cast<double>(n_obs);
    score_plugin += rep.score_plugin;
  }
  if (report.completed < 2) throw HarnessError("calibration: too few successful replications");
  check_failures(report.failed, reps, opts.max_failure_rate, n_vars, n_obs);
  const double m = static_cast<double>(report.completed);
  auto variance = [m](double sum, double sq) { return (sq - sum * sum / m) / (m - 1.0); };

  double lv = 0.0;
  for (Eigen::Index i = 0; i < n_vars; ++i)
    for (Eigen::Index k = 0; k < r; ++k) lv += variance(load_sum(i, k), load_sq(i, k));
  report.loading_var_empirical = lv / static_cast<double>(n_vars * r);
  report.loading_var_plugin = loading_plugin / m;

  double iv = 0.0;
  for (Eigen::Index i = 0; i < n_vars; ++i) iv += variance(idio_sum(i), idio_sq(i));
  report.idio_var_empirical = iv / static_cast<double>(n_vars);
  report.idio_var_plugin = idio_plugin / m;

  Matrix sc = Matrix::Zero(r, r);
  for (Eigen::Index s = 0; s < n_obs; ++s) {
    Vector mean = score_sum.row(s).transpose() / m;
    sc += (score_outer[static_cast<std::size_t>(s)] - m * mean * mean.transpose()) / (m - 1.0);
  }
  report.score_cov_empirical = sc / static_cast<double>(n_obs);
  report.score_cov_plugin = score_plugin / m;
  return report;
}

}  // namespace factorml
