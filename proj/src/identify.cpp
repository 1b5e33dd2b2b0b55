#include "factorml/identify.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "factorml/pca.hpp"

namespace factorml {

namespace {

constexpr double kTieTol = 1e-10;

bool strictly_descending(const Vector& d, double rel = kTieTol) {
  for (Eigen::Index k = 0; k + 1 < d.size(); ++k)
    if (!(d(k) - d(k + 1) > rel * std::abs(d(k)))) return false;
  return true;
}

Matrix weighted_gram(const FactorParams& p) {
  const double n = static_cast<double>(p.n_vars());
  Matrix s = p.loadings.transpose() * p.idio_var.cwiseInverse().asDiagonal() * p.loadings / n;
  return 0.5 * (s + s.transpose());
}

Matrix top_block(const Matrix& loadings) {
  const Eigen::Index r = loadings.cols();
  if (loadings.rows() < r) throw InvalidInput("fewer variables than factors");
  return loadings.topRows(r);
}

FactorEstimate with_params(const FactorEstimate& e, FactorParams p, IdentificationTag tag) {
  FactorEstimate out = e;
  out.params = std::move(p);
  out.tag = tag;
  return out;
}

Ic3Rotation ic3_base(const FactorEstimate& e) {
  Ic3Rotation rot = rotate_to_ic3(e.params);
  if (!rot.distinct)
    throw NonIdentifiedOrdering("diagonal of (1/N) L' D^{-1} L has tied entries");
  return rot;
}

// Q from the QR decomposition of the transposed top block, with columns
// flipped so that the resulting lower-triangular block has a positive diagonal.
Matrix triangularizing_rotation(const Matrix& loadings) {
  const Eigen::Index r = loadings.cols();
  Matrix block = top_block(loadings);
  Eigen::HouseholderQR<Matrix> qr(block.transpose());
  Matrix q = qr.householderQ() * Matrix::Identity(r, r);
  Matrix tri = block * q;
  const double scale = block.norm();
  for (Eigen::Index k = 0; k < r; ++k) {
    if (!(std::abs(tri(k, k)) > kTieTol * scale)) {
      std::ostringstream msg;
      msg << "diagonal entry " << k + 1
          << " of the triangularized top block is zero; reorder the variables so the first r "
             "rows identify the factors";
      throw FirstRowsUnsuitable(msg.str());
    }
    if (tri(k, k) < 0.0) q.col(k) *= -1.0;
  }
  return q;
}

}  // namespace

Ic3Rotation rotate_to_ic3(const FactorParams& p) {
  p.validate();
  const Eigen::Index r = p.n_factors();
  Eigen::LLT<Matrix> llt(p.factor_cov);
  FactorParams q = p;
  q.loadings = p.loadings * Matrix(llt.matrixL());
  q.factor_cov = Matrix::Identity(r, r);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(weighted_gram(q));
  Matrix vecs = eig.eigenvectors().rowwise().reverse();
  q.loadings = q.loadings * vecs;
  normalize_column_signs(q.loadings);

  Ic3Rotation out;
  out.diagonal = eig.eigenvalues().reverse();
  out.distinct = strictly_descending(out.diagonal);
  out.params = std::move(q);
  return out;
}

FactorEstimate to_ic1(const FactorEstimate& e) {
  e.params.validate();
  const Eigen::Index r = e.params.n_factors();
  Matrix block = top_block(e.params.loadings);
  Eigen::JacobiSVD<Matrix> svd(block);
  const Vector& sv = svd.singularValues();
  if (!(sv(r - 1) > 0.0) || sv(0) / sv(r - 1) > 1e10)
    throw FirstRowsUnsuitable(
        "top r x r block of the loadings is singular or ill-conditioned; reorder the variables");
  Eigen::PartialPivLU<Matrix> lu(block);
  FactorParams p = e.params;
  p.loadings = e.params.loadings * lu.inverse();
  p.loadings.topRows(r).setIdentity();
  Matrix m = block * e.params.factor_cov * block.transpose();
  p.factor_cov = 0.5 * (m + m.transpose());
  return with_params(e, std::move(p), IdentificationTag::IC1);
}

FactorEstimate to_ic2(const FactorEstimate& e) {
  Ic3Rotation base = ic3_base(e);
  const FactorParams& b = base.params;
  Matrix s = weighted_gram(b);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (!(eig.eigenvalues().minCoeff() > 0.0))
    throw InvalidInput("(1/N) L' D^{-1} L is not positive definite");
  Matrix inv_root = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                    eig.eigenvectors().transpose();

  FactorParams p = b;
  p.loadings = b.loadings * inv_root;
  p.factor_cov = s;

  // descending order of diag(M_ff), then column signs
  const Eigen::Index r = p.n_factors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index c) { return s(a, a) > s(c, c); });
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(r);
  for (Eigen::Index k = 0; k < r; ++k) perm.indices()(k) = static_cast<int>(order[static_cast<std::size_t>(k)]);
  p.loadings = p.loadings * perm;
  p.factor_cov = perm.transpose() * p.factor_cov * perm;
  Vector signs = normalize_column_signs(p.loadings);
  p.factor_cov = signs.asDiagonal() * p.factor_cov * signs.asDiagonal();
  if (!strictly_descending(p.factor_cov.diagonal()))
    throw NonIdentifiedOrdering("diagonal of M_ff has tied entries");
  return with_params(e, std::move(p), IdentificationTag::IC2);
}

FactorEstimate to_ic3(const FactorEstimate& e) {
  Ic3Rotation base = ic3_base(e);
  return with_params(e, std::move(base.params), IdentificationTag::IC3);
}

FactorEstimate to_ic5(const FactorEstimate& e) {
  FactorParams p = rotate_to_ic3(e.params).params;
  Matrix q = triangularizing_rotation(p.loadings);
  p.loadings = p.loadings * q;
  return with_params(e, std::move(p), IdentificationTag::IC5);
}

FactorEstimate to_ic4(const FactorEstimate& e) {
  FactorEstimate ic5 = to_ic5(e);
  FactorParams p = ic5.params;
  const Eigen::Index r = p.n_factors();
  Vector w = p.loadings.topRows(r).diagonal();
  p.loadings = p.loadings * w.cwiseInverse().asDiagonal();
  p.factor_cov = w.cwiseProduct(w).asDiagonal();
  return with_params(e, std::move(p), IdentificationTag::IC4);
}

FactorEstimate to_ic(const FactorEstimate& e, IdentificationTag tag) {
  switch (tag) {
    case IdentificationTag::IC1: return to_ic1(e);
    case IdentificationTag::IC2: return to_ic2(e);
    case IdentificationTag::IC3: return to_ic3(e);
    case IdentificationTag::IC4: return to_ic4(e);
    case IdentificationTag::IC5: return to_ic5(e);
  }
  throw InvalidInput("unknown identification tag");
}

Vector align_to_truth(const Matrix& est, const Matrix& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols())
    throw InvalidInput("align_to_truth needs matrices of the same shape");
  Vector signs(est.cols());
  for (Eigen::Index k = 0; k < est.cols(); ++k) signs(k) = est.col(k).dot(truth.col(k)) < 0.0 ? -1.0 : 1.0;
  return signs;
}

std::vector<InvariantCheck> check_identification(const FactorParams& p, IdentificationTag tag, double tol) {
  std::vector<InvariantCheck> out;
  auto add = [&](std::string name, double value, double tolerance) {
    out.push_back({std::move(name), value <= tolerance, value, tolerance});
  };

  const Eigen::Index r = p.n_factors();
  const bool shapes_ok = r >= 1 && p.idio_var.size() == p.n_vars() && p.factor_cov.rows() == r &&
                         p.factor_cov.cols() == r && p.n_vars() >= r;
  add("shapes consistent", shapes_ok ? 0.0 : 1.0, 0.0);
  if (!shapes_ok) return out;

  add("idio_var positive", (p.idio_var.array() > 0.0).all() ? 0.0 : 1.0, 0.0);
  if (!(p.idio_var.array() > 0.0).all()) return out;
  const Matrix& m = p.factor_cov;
  const double m_scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  add("factor_cov symmetric", (m - m.transpose()).cwiseAbs().maxCoeff() / m_scale, tol);
  Eigen::SelfAdjointEigenSolver<Matrix> meig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  add("factor_cov positive definite", meig.eigenvalues().minCoeff() > 0.0 ? 0.0 : 1.0, 0.0);

  const Matrix block = p.loadings.topRows(r);
  const double b_scale = std::max(1.0, block.cwiseAbs().maxCoeff());
  const Matrix s = weighted_gram(p);
  const double s_scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  const Matrix eye = Matrix::Identity(r, r);

  auto off_diagonal = [](const Matrix& a) {
    Matrix c = a;
    c.diagonal().setZero();
    return c.cwiseAbs().maxCoeff();
  };
  auto descending_violation = [](const Vector& d) {
    double worst = d.minCoeff() > 0.0 ? 0.0 : 1.0;
    for (Eigen::Index k = 0; k + 1 < d.size(); ++k)
      if (!(d(k) - d(k + 1) > kTieTol * std::abs(d(k)))) worst = std::max(worst, 1.0);
    return worst;
  };
  auto upper_part = [](const Matrix& a) {
    Matrix c = a.triangularView<Eigen::StrictlyUpper>();
    return c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
  };

  switch (tag) {
    case IdentificationTag::IC1:
      add("top block of loadings = I_r", (block - eye).cwiseAbs().maxCoeff() / b_scale, tol);
      break;
    case IdentificationTag::IC2:
      add("(1/N) L' D^-1 L = I_r", (s - eye).cwiseAbs().maxCoeff(), tol);
      add("factor_cov diagonal", off_diagonal(m) / m_scale, tol);
      add("factor_cov diagonal strictly decreasing and positive", descending_violation(m.diagonal()), 0.0);
      break;
    case IdentificationTag::IC3:
      add("factor_cov = I_r", (m - eye).cwiseAbs().maxCoeff(), tol);
      add("(1/N) L' D^-1 L diagonal", off_diagonal(s) / s_scale, tol);
      add("(1/N) L' D^-1 L diagonal strictly decreasing and positive", descending_violation(s.diagonal()), 0.0);
      break;
    case IdentificationTag::IC4:
      add("factor_cov diagonal", off_diagonal(m) / m_scale, tol);
      add("factor_cov diagonal positive", m.diagonal().minCoeff() > 0.0 ? 0.0 : 1.0, 0.0);
      add("top block of loadings lower triangular", upper_part(block) / b_scale, tol);
      add("top block of loadings has unit diagonal", (block.diagonal().array() - 1.0).abs().maxCoeff(), tol);
      break;
    case IdentificationTag::IC5:
      add("factor_cov = I_r", (m - eye).cwiseAbs().maxCoeff(), tol);
      add("top block of loadings lower triangular", upper_part(block) / b_scale, tol);
      add("top block of loadings has nonzero diagonal",
          block.diagonal().cwiseAbs().minCoeff() > tol * b_scale ? 0.0 : 1.0, 0.0);
      break;
  }
  return out;
}

bool all_passed(const std::vector<InvariantCheck>& checks) {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

}  // namespace factorml
