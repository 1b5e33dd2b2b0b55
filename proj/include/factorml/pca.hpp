// Principal-components estimator of a factor model.
//
// Normalization: F'F/T = I_r and L'L diagonal with descending entries (the
// unweighted analogue of IC3). Each loading column is signed so that its
// largest-magnitude entry is positive.
#ifndef FACTORML_PCA_HPP
#define FACTORML_PCA_HPP

#include "factorml/model.hpp"

namespace factorml {

struct PcFit {
  Matrix loadings;  // N x r
  Matrix scores;    // T x r
  Vector idio_var;  // (1/T) sum_t e_it^2 from the PC residuals
  Vector eigenvalues;  // top r eigenvalues of M_zz, descending
};

/// Works on the N x N moment matrix when N <= T and on the T x T one
/// otherwise. Throws RankError when r exceeds the numerical rank of M_zz.
PcFit pc_fit(const Dataset& d, Eigen::Index r);

/// Plug-in sandwich M^{-1} U M^{-1} with M = (1/N) sum l_i l_i' and
/// U = (1/N) sum l_i l_i' sigma_i^2; the limiting covariance of the
/// PC factor estimates.
Matrix pc_sandwich_cov(const Matrix& loadings, const Vector& idio_var);

/// Flip columns so the largest-magnitude entry of each is positive (first
/// row wins ties). Returns the sign applied to each column.
Vector normalize_column_signs(Matrix& loadings);

}  // namespace factorml

#endif  // FACTORML_PCA_HPP
