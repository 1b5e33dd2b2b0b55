#include "factorml/model.hpp"

#include <cmath>
#include <sstream>

namespace factorml {

Dataset::Dataset(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1) throw InvalidInput("dataset needs at least one variable");
  if (values_.cols() < 2) throw InvalidInput("dataset needs at least two observations");
  if (!values_.allFinite()) throw InvalidInput("dataset contains non-finite entries");
}

Dataset Dataset::demeaned() const {
  Matrix centered = values_.colwise() - means();
  return Dataset(std::move(centered));
}

std::string_view to_string(IdentificationTag tag) {
  switch (tag) {
    case IdentificationTag::IC1: return "IC1";
    case IdentificationTag::IC2: return "IC2";
    case IdentificationTag::IC3: return "IC3";
    case IdentificationTag::IC4: return "IC4";
    case IdentificationTag::IC5: return "IC5";
  }
  return "?";
}

IdentificationTag parse_tag(std::string_view text) {
  if (text.size() == 3 && (text.substr(0, 2) == "IC" || text.substr(0, 2) == "ic")) text.remove_prefix(2);
  if (text.size() == 1 && text[0] >= '1' && text[0] <= '5')
    return static_cast<IdentificationTag>(text[0] - '1');
  throw InvalidInput("unknown identification tag '" + std::string(text) + "'");
}

void FactorParams::validate() const {
  const auto n = loadings.rows();
  const auto r = loadings.cols();
  if (r < 1) throw InvalidInput("model needs at least one factor");
  if (idio_var.size() != n) throw InvalidInput("idio_var length does not match loadings rows");
  if (intercept.size() != 0 && intercept.size() != n)
    throw InvalidInput("intercept length does not match loadings rows");
  if (factor_cov.rows() != r || factor_cov.cols() != r)
    throw InvalidInput("factor_cov must be r x r");
  if (!loadings.allFinite() || !idio_var.allFinite() || !factor_cov.allFinite())
    throw InvalidInput("parameters contain non-finite entries");
  if ((idio_var.array() <= 0.0).any()) throw InvalidInput("idio_var must be positive");
  const double scale = std::max(1.0, factor_cov.cwiseAbs().maxCoeff());
  if ((factor_cov - factor_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidInput("factor_cov is not symmetric");
  Eigen::LLT<Matrix> llt(factor_cov);
  if (llt.info() != Eigen::Success) throw InvalidInput("factor_cov is not positive definite");
}

VarianceBox VarianceBox::relative_to(const Matrix& m_zz, double floor_factor,
                                     double ceiling_factor) {
  double mean_var = m_zz.diagonal().mean();
  if (!(mean_var > 0.0)) mean_var = 1.0;
  return {floor_factor * mean_var, ceiling_factor * mean_var};
}

WoodburyInverse::WoodburyInverse(const FactorParams& p) {
  p.validate();
  inv_idio_ = p.idio_var.cwiseInverse();
  scaled_ = inv_idio_.asDiagonal() * p.loadings;

  Eigen::LLT<Matrix> mff(p.factor_cov);
  const Eigen::Index r = p.n_factors();
  Matrix mff_inv = mff.solve(Matrix::Identity(r, r));
  Matrix inner = mff_inv + p.loadings.transpose() * scaled_;
  inner = 0.5 * (inner + inner.transpose());

  Eigen::LLT<Matrix> llt(inner);
  rcond_ = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (llt.info() != Eigen::Success || !(rcond_ > 1e-14)) {
    std::ostringstream msg;
    msg << "r x r system M_ff^{-1} + L'D^{-1}L is singular (rcond " << rcond_ << ")";
    throw IllConditioned(msg.str(), rcond_);
  }
  inner_inv_ = llt.solve(Matrix::Identity(r, r));

  double log_det_mff = 0.0;
  double log_det_inner = 0.0;
  for (Eigen::Index k = 0; k < r; ++k) {
    log_det_mff += 2.0 * std::log(mff.matrixLLT()(k, k));
    log_det_inner += 2.0 * std::log(llt.matrixLLT()(k, k));
  }
  log_det_ = p.idio_var.array().log().sum() + log_det_mff + log_det_inner;
}

Matrix WoodburyInverse::apply(const Eigen::Ref<const Matrix>& x) const {
  Matrix out = inv_idio_.asDiagonal() * x;
  out.noalias() -= scaled_ * (inner_inv_ * (scaled_.transpose() * x));
  return out;
}

Vector WoodburyInverse::diagonal() const {
  Matrix ug = scaled_ * inner_inv_;
  return inv_idio_ - (ug.array() * scaled_.array()).rowwise().sum().matrix();
}

Matrix sample_second_moment(const Dataset& d) {
  Matrix centered = d.values().colwise() - d.means();
  Matrix m = Matrix::Zero(d.n_vars(), d.n_vars());
  m.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(d.n_obs()));
  return m.selfadjointView<Eigen::Lower>();
}

namespace {

void check_shapes(const Matrix& m_zz, const FactorParams& p) {
  if (m_zz.rows() != m_zz.cols()) throw InvalidInput("M_zz must be square");
  if (m_zz.rows() != p.n_vars()) throw InvalidInput("M_zz dimension does not match the model");
}

}  // namespace

double log_likelihood(const Matrix& m_zz, const FactorParams& p) {
  check_shapes(m_zz, p);
  WoodburyInverse inv(p);
  const auto& u = inv.scaled_loadings();
  // tr(M S^{-1}) = sum_i M_ii / d_i - tr(G U' M U)
  Matrix mu = m_zz * u;
  Matrix umu = u.transpose() * mu;
  double trace = m_zz.diagonal().dot(inv.inv_idio()) - (inv.inner_inverse().cwiseProduct(umu)).sum();
  const double n = static_cast<double>(p.n_vars());
  return -(inv.log_det() + trace) / (2.0 * n);
}

FocMatrices foc_matrices(const Matrix& m_zz, const FactorParams& p) {
  check_shapes(m_zz, p);
  WoodburyInverse inv(p);
  FocMatrices out;
  out.inv_loadings = inv.apply(p.loadings);
  const Matrix& b = out.inv_loadings;
  Matrix mb = m_zz * b;  // M S^{-1} L
  out.loadings = mb.transpose() - p.loadings.transpose();
  out.factor_cov = p.loadings.transpose() * b - b.transpose() * mb;

  // diag(S^{-1} M S^{-1}) with S^{-1} = D^{-1} - U G U'.
  const auto& u = inv.scaled_loadings();
  const auto& g = inv.inner_inverse();
  const Vector& dinv = inv.inv_idio();
  Matrix mu = m_zz * u;
  Matrix c = mu * g;
  Matrix e = g * (u.transpose() * mu) * g;
  Vector quad = ((u * e).array() * u.array()).rowwise().sum();
  Vector cross = (c.array() * u.array()).rowwise().sum();
  Vector sms = m_zz.diagonal().cwiseProduct(dinv).cwiseProduct(dinv) - 2.0 * dinv.cwiseProduct(cross) + quad;
  out.variances = inv.diagonal() - sms;
  return out;
}

std::array<double, 3> foc_residuals(const Matrix& m_zz, const FactorParams& p) {
  FocMatrices f = foc_matrices(m_zz, p);
  WoodburyInverse inv(p);
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : num; };
  const Matrix& b = f.inv_loadings;
  double first_loadings = (m_zz * b).norm();  // || L' S^{-1} M ||
  double first_variances = inv.diagonal().norm();
  double first_mff = (p.loadings.transpose() * b).norm();
  return {ratio(f.loadings.norm(), first_loadings), ratio(f.variances.norm(), first_variances),
          ratio(f.factor_cov.norm(), first_mff)};
}

Dataset transpose_representation(const Dataset& d) { return Dataset(d.values().transpose()); }

Representation preferred_representation(Eigen::Index n_vars, Eigen::Index n_obs) {
  return n_vars <= n_obs ? Representation::Cross : Representation::Transposed;
}

}  // namespace factorml
