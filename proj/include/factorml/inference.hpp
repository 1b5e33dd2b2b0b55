// Plug-in asymptotic covariances for the ML estimates.
//
// Population limits (M_ff-bar, Q, Omega, Sigma_eer) are replaced by their
// values at the fitted parameters, so every number returned here is a
// first-order approximation. All covariances are finite-sample ones, i.e.
// already divided by the squared convergence rate.
//
// Loading and score covariances under IC4/IC5 depend on quantities that are
// not available in closed form here; those requests raise UnsupportedTag.
#ifndef FACTORML_INFERENCE_HPP
#define FACTORML_INFERENCE_HPP

#include <optional>

#include "factorml/estimate.hpp"

namespace factorml {

/// Column-stacking vec.
Vector vec(const Matrix& a);
/// Stacks the lower triangle (diagonal included) column by column.
Vector vech(const Matrix& a);
/// Stacks the strictly-lower triangle column by column.
Vector veck(const Matrix& a);
Matrix kron(const Matrix& a, const Matrix& b);

/// Duplication matrix: vec(S) = D_r vech(S) for symmetric S.
Matrix dup_matrix(Eigen::Index r);
/// Moore-Penrose inverse (D'D)^{-1} D'.
Matrix dup_matrix_pinv(Eigen::Index r);
/// J_r with diag{M} = J_r vec(M).
Matrix diag_selector(Eigen::Index r);
/// Generalized duplication matrix D~(M) for diagonal M (r^2 x r(r+1)/2).
Matrix gen_dup_tilde(const Matrix& m);
/// D-bar with vec(A) = D-bar veck(A) for skew-symmetric A (r^2 x r(r-1)/2).
Matrix gen_dup_bar(Eigen::Index r);

enum class Rate { SqrtT, SqrtNT };

struct LoadingCov {
  Matrix cov;  // r x r, covariance of lambda_j-hat
  IdentificationTag ic;
  Eigen::Index variable = 0;
};

struct FactorCovCov {
  enum class Layout { Vech, Diag };
  Matrix cov;  // covariance of vech(M_ff-hat) (IC1) or diag(M_ff-hat) (IC2, IC4)
  IdentificationTag ic;
  Rate rate = Rate::SqrtT;
  Layout layout = Layout::Vech;
};

struct ScoreCov {
  Matrix cov;  // r x r, covariance of f_t-hat
  IdentificationTag ic;
  double delta = 0.0;  // N / T
};

/// Covariance of lambda_j-hat; IC1, IC2 and IC3 only.
LoadingCov loading_cov(const FactorEstimate& e, Eigen::Index j);

/// Covariance of the free elements of M_ff-hat. Zero under IC3 and IC5,
/// where M_ff is fixed by the normalization. The IC2 formula assumes normal
/// errors and N/T -> 0.
FactorCovCov mff_cov(const FactorEstimate& e);

/// Variance of sigma_j^2-hat, sigma_j^4 (2 + kappa_j) / T. kappa_j defaults to
/// 0 (normal errors).
double idio_var_cov(const FactorEstimate& e, Eigen::Index j, std::optional<double> excess_kurtosis = {});

/// Excess kurtosis of every variable from the GLS-score residuals
/// z_it - zbar_i - lambda_i' f_t-hat. The likelihood itself never needs
/// residuals; this exists only to feed idio_var_cov.
Vector residual_excess_kurtosis(const Dataset& d, const FactorParams& p);

/// Covariance of the GLS score f_t-hat; IC1, IC2 and IC3 only.
ScoreCov score_cov(const FactorEstimate& e, const Vector& f_t, Eigen::Index n_vars, Eigen::Index n_obs);

}  // namespace factorml

#endif  // FACTORML_INFERENCE_HPP
