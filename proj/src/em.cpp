#include "factorml/em.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "factorml/identify.hpp"
#include "factorml/pca.hpp"

namespace factorml {

double EMTrace::max_loglik_decrease() const {
  double worst = 0.0;
  for (std::size_t k = 1; k < loglik_path.size(); ++k)
    worst = std::max(worst, loglik_path[k - 1] - loglik_path[k]);
  return worst;
}

void EMConfig::validate() const {
  if (max_iter < 1) throw InvalidInput("max_iter must be at least 1");
  if (!(tol > 0.0)) throw InvalidInput("tol must be positive");
  if (!(loglik_tol >= 0.0)) throw InvalidInput("loglik_tol must be nonnegative");
  if (var_floor && !(*var_floor > 0.0)) throw InvalidInput("var_floor must be positive");
  if (var_floor && var_ceiling && !(*var_floor < *var_ceiling))
    throw InvalidInput("var_floor must be below var_ceiling");
}

VarianceBox EMConfig::box_for(const Matrix& m_zz) const {
  VarianceBox box = VarianceBox::relative_to(m_zz);
  if (var_floor) box.floor = *var_floor;
  if (var_ceiling) box.ceiling = *var_ceiling;
  if (!(box.floor < box.ceiling)) throw InvalidInput("variance box is empty");
  return box;
}

FactorParams em_step(const Matrix& m_zz, const FactorParams& p, const VarianceBox& box) {
  const Eigen::Index r = p.n_factors();
  if (!p.factor_cov.isIdentity(1e-12)) throw InvalidInput("em_step expects factor_cov = I_r");
  if (m_zz.rows() != p.n_vars() || m_zz.cols() != p.n_vars())
    throw InvalidInput("M_zz dimension does not match the model");

  WoodburyInverse inv(p);
  // With M_ff = I, S^{-1} L = D^{-1} L G.
  Matrix beta = inv.scaled_loadings() * inv.inner_inverse();
  Matrix cross = m_zz * beta;  // (1/T) sum E(z_t f_t')
  Matrix second = beta.transpose() * cross + Matrix::Identity(r, r) - p.loadings.transpose() * beta;
  second = 0.5 * (second + second.transpose());  // (1/T) sum E(f_t f_t')

  Eigen::LLT<Matrix> llt(second);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    throw IllConditioned("E-step factor second moment is singular", rc);
  }

  FactorParams next;
  next.loadings = llt.solve(cross.transpose()).transpose();
  // diag(M - L_new L' S^{-1} M) = diag(M) - rowsum(L_new .* (M S^{-1} L))
  next.idio_var = m_zz.diagonal() - (next.loadings.array() * cross.array()).rowwise().sum().matrix();
  for (Eigen::Index i = 0; i < next.idio_var.size(); ++i) next.idio_var(i) = box.clamp(next.idio_var(i));
  next.factor_cov = Matrix::Identity(r, r);
  next.intercept = p.intercept;
  return next;
}

namespace {

FactorParams initial_params(const Dataset& d, const Matrix& m_zz, Eigen::Index r, const EMConfig& cfg,
                            const VarianceBox& box) {
  FactorParams p;
  if (std::holds_alternative<ProvidedInit>(cfg.init)) {
    p = std::get<ProvidedInit>(cfg.init).params;
    p.validate();
    if (p.n_vars() != d.n_vars() || p.n_factors() != r)
      throw InvalidInput("provided start values have the wrong shape");
    // fold M_ff into the loadings so that the working normalization holds
    Eigen::LLT<Matrix> llt(p.factor_cov);
    p.loadings = p.loadings * Matrix(llt.matrixL());
  } else if (std::holds_alternative<RandomInit>(cfg.init)) {
    std::mt19937_64 gen(std::get<RandomInit>(cfg.init).seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = std::sqrt(m_zz.diagonal().mean() / static_cast<double>(r));
    p.loadings = Matrix::NullaryExpr(d.n_vars(), r, [&] { return scale * normal(gen); });
    p.idio_var = 0.5 * m_zz.diagonal();
  } else {
    PcFit pc = pc_fit(d, r);
    p.loadings = pc.loadings;
    p.idio_var = pc.idio_var;
  }
  for (Eigen::Index i = 0; i < p.idio_var.size(); ++i) p.idio_var(i) = box.clamp(p.idio_var(i));
  p.factor_cov = Matrix::Identity(r, r);
  p.intercept = d.means();
  return p;
}

constexpr double kBoundaryRatio = 1e-3;

double param_norm(const FactorParams& p) {
  return std::sqrt(p.loadings.squaredNorm() + p.idio_var.squaredNorm());
}

}  // namespace

FactorEstimate fit(const Dataset& d, Eigen::Index r, const EMConfig& cfg) {
  cfg.validate();
  if (r < 1 || r >= std::min(d.n_vars(), d.n_obs())) throw InvalidInput("need 1 <= r < min(N, T)");

  const Matrix m_zz = sample_second_moment(d);
  const VarianceBox box = cfg.box_for(m_zz);
  FactorParams p = initial_params(d, m_zz, r, cfg, box);

  FactorEstimate est;
  EMTrace& trace = est.trace;
  double ll = log_likelihood(m_zz, p);
  trace.loglik_path.push_back(ll);

  std::vector<int> at_floor(static_cast<std::size_t>(p.n_vars()), 0);
  for (int k = 0; k < cfg.max_iter; ++k) {
    FactorParams next = em_step(m_zz, p, box);
    const double next_ll = log_likelihood(m_zz, next);
    const double diff = std::sqrt((next.loadings - p.loadings).squaredNorm() +
                                  (next.idio_var - p.idio_var).squaredNorm());
    trace.final_param_delta = diff / (1.0 + param_norm(p));
    const double ll_change = std::abs(next_ll - ll);

    for (Eigen::Index i = 0; i < next.idio_var.size(); ++i) {
      auto& count = at_floor[static_cast<std::size_t>(i)];
      count = next.idio_var(i) <= box.floor ? count + 1 : 0;
      if (count > 10) trace.heywood = true;
    }

    p = std::move(next);
    ll = next_ll;
    trace.loglik_path.push_back(ll);
    trace.iterations = k + 1;
    if (trace.final_param_delta < cfg.tol || ll_change < cfg.loglik_tol) {
      trace.converged = true;
      break;
    }
  }

  // EM approaches a zero variance sublinearly, so a boundary optimum rarely
  // reaches the floor. A tiny variance whose gradient still points down is
  // treated the same way.
  const Vector grad = foc_matrices(m_zz, p).variances;
  for (Eigen::Index i = 0; i < p.idio_var.size(); ++i) {
    const bool on_floor = p.idio_var(i) <= box.floor;
    const bool heading_down = p.idio_var(i) < kBoundaryRatio * m_zz(i, i) && grad(i) > 0.0;
    if (on_floor || heading_down) trace.pinned.push_back(i);
    if (heading_down) trace.heywood = true;
  }

  Ic3Rotation rot = rotate_to_ic3(p);
  est.params = std::move(rot.params);
  est.tag = IdentificationTag::IC3;
  est.n_obs = d.n_obs();
  est.loglik = log_likelihood(m_zz, est.params);
  trace.final_foc_residuals = foc_residuals(m_zz, est.params);

  if (!trace.converged) {
    std::ostringstream msg;
    msg << "EM did not converge within " << cfg.max_iter << " iterations (relative change "
        << trace.final_param_delta << ")";
    est.warnings.push_back(msg.str());
  }
  if (trace.heywood) {
    std::ostringstream msg;
    msg << "Heywood case: " << trace.pinned.size()
        << " idiosyncratic variance(s) at or heading to the lower bound " << box.floor;
    est.warnings.push_back(msg.str());
  }
  if (!rot.distinct) est.warnings.push_back("IC3 diagonal has tied entries; column order is not identified");
  return est;
}

}  // namespace factorml
