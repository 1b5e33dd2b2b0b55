#include "factorml/pca.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace factorml {

Vector normalize_column_signs(Matrix& loadings) {
  Vector signs = Vector::Ones(loadings.cols());
  for (Eigen::Index k = 0; k < loadings.cols(); ++k) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
      // strict comparison keeps the lowest row index on ties
      if (std::abs(loadings(i, k)) > best_abs) {
        best_abs = std::abs(loadings(i, k));
        best = i;
      }
    }
    if (loadings(best, k) < 0.0) {
      loadings.col(k) *= -1.0;
      signs(k) = -1.0;
    }
  }
  return signs;
}

PcFit pc_fit(const Dataset& d, Eigen::Index r) {
  const Eigen::Index n = d.n_vars();
  const Eigen::Index t = d.n_obs();
  if (r < 1 || r >= std::min(n, t)) throw InvalidInput("need 1 <= r < min(N, T)");
  Matrix x = d.values().colwise() - d.means();
  const double td = static_cast<double>(t);

  const bool cross = n <= t;
  Matrix moment = cross ? Matrix(x * x.transpose() / td) : Matrix(x.transpose() * x / td);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(moment);
  if (eig.info() != Eigen::Success) throw RankError("eigendecomposition of the moment matrix failed");
  const Eigen::Index m = moment.rows();
  Vector mu = eig.eigenvalues().reverse().head(r);
  Matrix vecs = eig.eigenvectors().rightCols(r).rowwise().reverse();

  const double top = eig.eigenvalues()(m - 1);
  const double tol = std::max(top, 0.0) * static_cast<double>(std::max(n, t)) *
                     std::numeric_limits<double>::epsilon();
  if (!(top > 0.0) || mu(r - 1) <= tol)
    throw RankError("number of factors exceeds the numerical rank of M_zz");

  PcFit out;
  out.eigenvalues = mu;
  Vector root = mu.cwiseSqrt();
  if (cross) {
    out.loadings = vecs * root.asDiagonal();
    out.scores = x.transpose() * vecs * root.cwiseInverse().asDiagonal();
  } else {
    out.scores = std::sqrt(td) * vecs;
    out.loadings = x * vecs / std::sqrt(td);
  }
  Vector signs = normalize_column_signs(out.loadings);
  out.scores = out.scores * signs.asDiagonal();

  Matrix resid = x - out.loadings * out.scores.transpose();
  out.idio_var = resid.rowwise().squaredNorm() / td;
  return out;
}

Matrix pc_sandwich_cov(const Matrix& loadings, const Vector& idio_var) {
  if (idio_var.size() != loadings.rows()) throw InvalidInput("idio_var length does not match loadings");
  const double n = static_cast<double>(loadings.rows());
  Matrix bread = loadings.transpose() * loadings / n;
  Matrix meat = loadings.transpose() * idio_var.asDiagonal() * loadings / n;
  Eigen::SelfAdjointEigenSolver<Matrix> es(bread);
  const Vector& mu = es.eigenvalues();
  if (es.info() != Eigen::Success || !(mu(0) > 1e-12 * mu(mu.size() - 1)))
    throw RankError("loadings second moment is singular");
  Matrix inv = es.eigenvectors() * mu.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  Matrix out = inv * meat * inv;
  return 0.5 * (out + out.transpose());
}

}  // namespace factorml
