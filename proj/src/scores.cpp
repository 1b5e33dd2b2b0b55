#include "factorml/scores.hpp"

#include <Eigen/Cholesky>

namespace factorml {

namespace {

// L' D^{-1} (z_t - zbar) for all t, as an r x T block.
Matrix weighted_projections(const Dataset& d, const FactorParams& p) {
  p.validate();
  if (d.n_vars() != p.n_vars()) throw InvalidInput("dataset and model disagree on the number of variables");
  Matrix x = d.values().colwise() - d.means();
  return (p.idio_var.cwiseInverse().asDiagonal() * p.loadings).transpose() * x;
}

Matrix solve_spd(const Matrix& a, const Matrix& rhs, bool rank_error) {
  Eigen::LLT<Matrix> llt(a);
  const double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (!(rc > 1e-14)) {
    if (rank_error) throw RankError("L' D^{-1} L is singular");
    throw IllConditioned("M_ff^{-1} + L' D^{-1} L is singular", rc);
  }
  return llt.solve(rhs);
}

Matrix gls_gram(const FactorParams& p) {
  return p.loadings.transpose() * p.idio_var.cwiseInverse().asDiagonal() * p.loadings;
}

}  // namespace

FactorScores projection_scores(const Dataset& d, const FactorParams& p) {
  Matrix proj = weighted_projections(d, p);
  const Eigen::Index r = p.n_factors();
  Matrix mff_inv = p.factor_cov.llt().solve(Matrix::Identity(r, r));
  Matrix inner = mff_inv + gls_gram(p);
  return {solve_spd(0.5 * (inner + inner.transpose()), proj, false).transpose(), ScoreMethod::Projection};
}

FactorScores gls_scores(const Dataset& d, const FactorParams& p) {
  Matrix proj = weighted_projections(d, p);
  return {solve_spd(gls_gram(p), proj, true).transpose(), ScoreMethod::Gls};
}

FactorScores factor_scores(const Dataset& d, const FactorParams& p, ScoreMethod method) {
  return method == ScoreMethod::Gls ? gls_scores(d, p) : projection_scores(d, p);
}

double score_gap(const Dataset& d, const FactorParams& p) {
  Matrix diff = projection_scores(d, p).values - gls_scores(d, p).values;
  return diff.rowwise().norm().maxCoeff();
}

}  // namespace factorml
