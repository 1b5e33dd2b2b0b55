#include "factorml/inference.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "factorml/scores.hpp"

namespace factorml {

Vector vec(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

Vector vech(const Matrix& a) {
  const Eigen::Index r = a.rows();
  Vector out(r * (r + 1) / 2);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = j; i < r; ++i) out(pos++) = a(i, j);
  return out;
}

Vector veck(const Matrix& a) {
  const Eigen::Index r = a.rows();
  Vector out(r * (r - 1) / 2);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = j + 1; i < r; ++i) out(pos++) = a(i, j);
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

namespace {

// 0-based position of element (i, j), i >= j, inside vech.
Eigen::Index vech_index(Eigen::Index i, Eigen::Index j, Eigen::Index r) {
  return j * r - j * (j - 1) / 2 + (i - j);
}

void require_positive(Eigen::Index r) {
  if (r < 1) throw InvalidInput("dimension must be at least 1");
}

}  // namespace

Matrix dup_matrix(Eigen::Index r) {
  require_positive(r);
  Matrix d = Matrix::Zero(r * r, r * (r + 1) / 2);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < r; ++i) d(j * r + i, vech_index(std::max(i, j), std::min(i, j), r)) = 1.0;
  return d;
}

Matrix dup_matrix_pinv(Eigen::Index r) {
  Matrix d = dup_matrix(r);
  Matrix dtd = d.transpose() * d;  // diagonal with entries 1 or 2
  return dtd.diagonal().cwiseInverse().asDiagonal() * d.transpose();
}

Matrix diag_selector(Eigen::Index r) {
  require_positive(r);
  Matrix j = Matrix::Zero(r, r * r);
  for (Eigen::Index k = 0; k < r; ++k) j(k, k * r + k) = 1.0;
  return j;
}

Matrix gen_dup_tilde(const Matrix& m) {
  const Eigen::Index r = m.rows();
  require_positive(r);
  if (m.cols() != r) throw InvalidInput("M must be square");
  Matrix off = m;
  off.diagonal().setZero();
  if (off.cwiseAbs().maxCoeff() > 0.0) throw InvalidInput("M must be diagonal");
  if ((m.diagonal().array() == 0.0).any()) throw InvalidInput("M has a zero diagonal entry");

  Matrix out = Matrix::Zero(r * r, r * (r + 1) / 2);
  // Row k (1-based): column block j = floor((k-1)/r) + 1, row i = k - (j-1) r.
  for (Eigen::Index k = 1; k <= r * r; ++k) {
    const Eigen::Index j = (k - 1) / r + 1;
    const Eigen::Index i = k - (j - 1) * r;
    if (i >= j) {
      const Eigen::Index col = (2 * r - j + 2) * (j - 1) / 2 + i - j + 1;
      out(k - 1, col - 1) = 1.0;
    } else {
      const Eigen::Index col = (2 * r - i + 2) * (i - 1) / 2 - i + j + 1;
      out(k - 1, col - 1) = -m(j - 1, j - 1) / m(i - 1, i - 1);
    }
  }
  return out;
}

Matrix gen_dup_bar(Eigen::Index r) {
  require_positive(r);
  const Eigen::Index cols = r * (r - 1) / 2;
  Matrix out = Matrix::Zero(r * r, cols);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = j + 1; i < r; ++i) {
      out(j * r + i, pos) = 1.0;   // a_ij, below the diagonal
      out(i * r + j, pos) = -1.0;  // a_ji = -a_ij
      ++pos;
    }
  }
  return out;
}

namespace {

void require_tag(const FactorEstimate& e, std::initializer_list<IdentificationTag> allowed, const char* what) {
  for (auto t : allowed)
    if (e.tag == t) return;
  std::ostringstream msg;
  msg << what << " is not available in closed form under " << to_string(e.tag)
      << " (needs the limiting covariance of the rotation matrix, which is not implemented)";
  throw UnsupportedTag(msg.str());
}

double require_obs(const FactorEstimate& e) {
  if (e.n_obs < 2) throw InvalidInput("estimate does not record the sample size T");
  return static_cast<double>(e.n_obs);
}

Matrix inverse_spd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw RankError("matrix is not positive definite");
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

Matrix leading_variances(const FactorParams& p) {
  const Eigen::Index r = p.n_factors();
  return p.idio_var.head(r).asDiagonal();
}

Matrix weighted_gram_over_n(const FactorParams& p) {
  const double n = static_cast<double>(p.n_vars());
  return symmetrize(p.loadings.transpose() * p.idio_var.cwiseInverse().asDiagonal() * p.loadings / n);
}

}  // namespace

LoadingCov loading_cov(const FactorEstimate& e, Eigen::Index j) {
  require_tag(e, {IdentificationTag::IC1, IdentificationTag::IC2, IdentificationTag::IC3}, "loading covariance");
  const FactorParams& p = e.params;
  if (j < 0 || j >= p.n_vars()) throw InvalidInput("variable index out of range");
  const double t = require_obs(e);
  Matrix mff_inv = inverse_spd(p.factor_cov);
  double scale = p.idio_var(j);
  if (e.tag == IdentificationTag::IC1) {
    Vector lam = p.loadings.row(j).transpose();
    scale += lam.dot(leading_variances(p) * lam);
  }
  return {symmetrize(mff_inv * scale / t), e.tag, j};
}

FactorCovCov mff_cov(const FactorEstimate& e) {
  const FactorParams& p = e.params;
  const Eigen::Index r = p.n_factors();
  const double t = require_obs(e);
  const double n = static_cast<double>(p.n_vars());
  const Matrix& m = p.factor_cov;
  const Matrix eye = Matrix::Identity(r, r);
  FactorCovCov out;
  out.ic = e.tag;

  switch (e.tag) {
    case IdentificationTag::IC3:
    case IdentificationTag::IC5:
      out.cov = Matrix::Zero(r * (r + 1) / 2, r * (r + 1) / 2);
      out.layout = FactorCovCov::Layout::Vech;
      return out;
    case IdentificationTag::IC1: {
      Matrix dp = dup_matrix_pinv(r);
      out.cov = symmetrize(4.0 * dp * kron(leading_variances(p), m) * dp.transpose() / t);
      out.layout = FactorCovCov::Layout::Vech;
      return out;
    }
    case IdentificationTag::IC2: {
      Matrix q = weighted_gram_over_n(p);
      Matrix omega = Matrix::Zero(r * r, r * r);
      for (Eigen::Index i = 0; i < p.n_vars(); ++i) {
        Vector lam = p.loadings.row(i).transpose();
        Vector ll = vec(lam * lam.transpose());  // lambda (x) lambda
        omega.noalias() += ll * ll.transpose() / (p.idio_var(i) * p.idio_var(i));
      }
      omega /= n;
      Matrix im = kron(eye, m);
      Matrix jr = diag_selector(r);
      out.cov = symmetrize(jr * (2.0 * im * omega * im + 4.0 * kron(q, m)) * jr.transpose() / (n * t));
      out.rate = Rate::SqrtNT;
      out.layout = FactorCovCov::Layout::Diag;
      return out;
    }
    case IdentificationTag::IC4: {
      Matrix block = p.loadings.topRows(r);
      Matrix inner = block.transpose() * leading_variances(p).inverse() * block;
      Matrix jr = diag_selector(r);
      out.cov = symmetrize(4.0 * jr * kron(inverse_spd(symmetrize(inner)), m) * jr.transpose() / t);
      out.layout = FactorCovCov::Layout::Diag;
      return out;
    }
  }
  throw InvalidInput("unknown identification tag");
}

double idio_var_cov(const FactorEstimate& e, Eigen::Index j, std::optional<double> excess_kurtosis) {
  const FactorParams& p = e.params;
  if (j < 0 || j >= p.n_vars()) throw InvalidInput("variable index out of range");
  const double kappa = excess_kurtosis.value_or(0.0);
  if (!(kappa >= -2.0)) throw InvalidKurtosis("excess kurtosis must be at least -2");
  const double s2 = p.idio_var(j);
  return s2 * s2 * (2.0 + kappa) / require_obs(e);
}

Vector residual_excess_kurtosis(const Dataset& d, const FactorParams& p) {
  Matrix f = gls_scores(d, p).values;  // T x r
  Matrix resid = (d.values().colwise() - d.means()) - p.loadings * f.transpose();
  const double t = static_cast<double>(d.n_obs());
  Vector out(resid.rows());
  for (Eigen::Index i = 0; i < resid.rows(); ++i) {
    const double m2 = resid.row(i).squaredNorm() / t;
    const double m4 = resid.row(i).array().pow(4).sum() / t;
    out(i) = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  }
  return out;
}

ScoreCov score_cov(const FactorEstimate& e, const Vector& f_t, Eigen::Index n_vars, Eigen::Index n_obs) {
  require_tag(e, {IdentificationTag::IC1, IdentificationTag::IC2, IdentificationTag::IC3}, "score covariance");
  const FactorParams& p = e.params;
  const Eigen::Index r = p.n_factors();
  if (f_t.size() != r) throw InvalidInput("score vector has the wrong length");
  if (n_vars < 1 || n_obs < 1) throw InvalidInput("N and T must be positive");
  const double n = static_cast<double>(n_vars);
  ScoreCov out;
  out.ic = e.tag;
  out.delta = n / static_cast<double>(n_obs);
  if (e.tag == IdentificationTag::IC2) {
    out.cov = Matrix::Identity(r, r) / n;
    return out;
  }
  Matrix cov = inverse_spd(weighted_gram_over_n(p));
  if (e.tag == IdentificationTag::IC1) {
    const double quad = f_t.dot(inverse_spd(p.factor_cov) * f_t);
    cov += out.delta * quad * leading_variances(p);
  }
  out.cov = symmetrize(cov / n);
  return out;
}

}  // namespace factorml
