// Linear factor model z_t = alpha + L f_t + e_t with diagonal idiosyncratic
// covariance, and the Gaussian quasi log-likelihood of its implied
// covariance Sigma_zz = L M_ff L' + Sigma_ee.
//
// Nothing here forms or inverts a dense N x N Sigma_zz. Inverse products go
// through
//   Sigma_zz^{-1} = D^{-1} - D^{-1} L (M_ff^{-1} + L' D^{-1} L)^{-1} L' D^{-1}
// and the log-determinant through
//   |Sigma_zz| = |D| |M_ff| |M_ff^{-1} + L' D^{-1} L|,
// where D = Sigma_ee is stored as a vector.
#ifndef FACTORML_MODEL_HPP
#define FACTORML_MODEL_HPP

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "factorml/errors.hpp"

namespace factorml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Observed panel, stored variables-by-time (N x T).
class Dataset {
 public:
  /// Throws InvalidInput unless N >= 1, T >= 2 and every entry is finite.
  explicit Dataset(Matrix values);

  const Matrix& values() const { return values_; }
  Eigen::Index n_vars() const { return values_.rows(); }
  Eigen::Index n_obs() const { return values_.cols(); }

  /// Time average z-bar, length N.
  Vector means() const { return values_.rowwise().mean(); }
  /// Copy with each row's time average removed.
  Dataset demeaned() const;

 private:
  Matrix values_;
};

enum class IdentificationTag { IC1, IC2, IC3, IC4, IC5 };

std::string_view to_string(IdentificationTag tag);
/// Accepts "IC1".."IC5" or "1".."5".
IdentificationTag parse_tag(std::string_view text);

/// Parameters of the implied covariance L M_ff L' + diag(idio_var).
struct FactorParams {
  Matrix loadings;    // N x r
  Vector idio_var;    // N
  Matrix factor_cov;  // r x r, M_ff
  Vector intercept;   // N, the sample mean of the fitting data

  Eigen::Index n_vars() const { return loadings.rows(); }
  Eigen::Index n_factors() const { return loadings.cols(); }

  /// Throws InvalidInput on inconsistent shapes, non-positive variances,
  /// asymmetric or non-positive-definite factor_cov.
  void validate() const;
};

/// Box [floor, ceiling] in which idiosyncratic variances are kept.
struct VarianceBox {
  double floor;
  double ceiling;

  /// floor = 1e-8 * mean(diag M_zz), ceiling = 1e8 * mean(diag M_zz).
  static VarianceBox relative_to(const Matrix& m_zz, double floor_factor = 1e-8,
                                 double ceiling_factor = 1e8);
  double clamp(double v) const { return v < floor ? floor : (v > ceiling ? ceiling : v); }
};

/// Factorized Sigma_zz^{-1} for one parameter value.
class WoodburyInverse {
 public:
  /// Throws IllConditioned when M_ff^{-1} + L' D^{-1} L is not numerically
  /// positive definite.
  explicit WoodburyInverse(const FactorParams& p);

  /// Sigma_zz^{-1} x for an N x k block x.
  Matrix apply(const Eigen::Ref<const Matrix>& x) const;
  /// diag(Sigma_zz^{-1}).
  Vector diagonal() const;
  /// ln |Sigma_zz|.
  double log_det() const { return log_det_; }

  const Vector& inv_idio() const { return inv_idio_; }
  /// D^{-1} L, N x r.
  const Matrix& scaled_loadings() const { return scaled_; }
  /// G = (M_ff^{-1} + L' D^{-1} L)^{-1}, r x r.
  const Matrix& inner_inverse() const { return inner_inv_; }
  double inner_rcond() const { return rcond_; }

 private:
  Vector inv_idio_;
  Matrix scaled_;
  Matrix inner_inv_;
  double log_det_ = 0.0;
  double rcond_ = 0.0;
};

/// M_zz = (1/T) sum_t (z_t - zbar)(z_t - zbar)'. Note the divisor is T,
/// not T - 1.
Matrix sample_second_moment(const Dataset& d);

/// -(1/2N) ln|Sigma_zz| - (1/2N) tr(M_zz Sigma_zz^{-1}).
double log_likelihood(const Matrix& m_zz, const FactorParams& p);

/// Normalized first-order-condition residuals for the loadings, the
/// idiosyncratic variances and M_ff, in that order.
std::array<double, 3> foc_residuals(const Matrix& m_zz, const FactorParams& p);

/// The raw residual matrices behind foc_residuals.
struct FocMatrices {
  Matrix loadings;    // L' S^{-1} (M_zz - S), r x N
  Vector variances;   // diag(S^{-1}) - diag(S^{-1} M_zz S^{-1})
  Matrix factor_cov;  // L' S^{-1} L - L' S^{-1} M_zz S^{-1} L, r x r
  Matrix inv_loadings;  // S^{-1} L, N x r
};
FocMatrices foc_matrices(const Matrix& m_zz, const FactorParams& p);

/// The T x N dataset. Fitting it estimates the factors and the time-wise
/// heteroskedasticity instead of the loadings and Sigma_ee.
Dataset transpose_representation(const Dataset& d);

enum class Representation { Cross, Transposed };

/// The representation with fewer free parameters: the cross-sectional one
/// when N <= T, the transposed one otherwise.
Representation preferred_representation(Eigen::Index n_vars, Eigen::Index n_obs);

}  // namespace factorml

#endif  // FACTORML_MODEL_HPP
