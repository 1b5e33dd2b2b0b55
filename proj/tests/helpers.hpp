// Shared fixtures and dense-matrix oracles for the test suites.
#ifndef FACTORML_TESTS_HELPERS_HPP
#define FACTORML_TESTS_HELPERS_HPP

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "factorml/model.hpp"

namespace testutil {

using factorml::Dataset;
using factorml::FactorParams;
using factorml::Matrix;
using factorml::Vector;

inline Matrix gaussian(std::mt19937_64& g, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  return Matrix::NullaryExpr(rows, cols, [&] { return n(g); });
}

inline Vector uniform(std::mt19937_64& g, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return Vector::NullaryExpr(n, [&] { return u(g); });
}

/// Random parameters with M_ff = I unless `general_mff`.
inline FactorParams random_params(std::mt19937_64& g, Eigen::Index n, Eigen::Index r, bool general_mff = false) {
  FactorParams p;
  p.loadings = gaussian(g, n, r);
  p.idio_var = uniform(g, n, 0.2, 3.0);
  if (general_mff) {
    Matrix a = gaussian(g, r, r);
    p.factor_cov = a * a.transpose() + Matrix::Identity(r, r);
  } else {
    p.factor_cov = Matrix::Identity(r, r);
  }
  p.intercept = Vector::Zero(n);
  return p;
}

/// Panel drawn from the model with the given parameters (N x T).
inline Dataset simulate(std::mt19937_64& g, const FactorParams& p, Eigen::Index t) {
  Eigen::LLT<Matrix> llt(p.factor_cov);
  Matrix f = Matrix(llt.matrixL()) * gaussian(g, p.n_factors(), t);
  Matrix e = p.idio_var.cwiseSqrt().asDiagonal() * gaussian(g, p.n_vars(), t);
  return Dataset(p.loadings * f + e);
}

inline Matrix dense_sigma(const FactorParams& p) {
  Matrix s = p.loadings * p.factor_cov * p.loadings.transpose();
  s.diagonal() += p.idio_var;
  return s;
}

/// Log-likelihood straight from a dense Cholesky factor of Sigma_zz.
inline double dense_loglik(const Matrix& m_zz, const FactorParams& p) {
  Matrix s = dense_sigma(p);
  Eigen::LLT<Matrix> llt(s);
  const double n = static_cast<double>(s.rows());
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double trace = llt.solve(m_zz).trace();
  return -logdet / (2.0 * n) - trace / (2.0 * n);
}

/// EM update computed observation by observation from the conditional
/// distribution f_t | z_t ~ N(L' S^{-1} x_t, I - L' S^{-1} L), with M_ff = I.
inline FactorParams per_observation_em(const Dataset& d, const FactorParams& p) {
  const Eigen::Index n = d.n_vars(), r = p.n_factors(), t = d.n_obs();
  Matrix s = dense_sigma(p);
  Matrix gain = s.ldlt().solve(p.loadings).transpose();  // r x N
  Matrix post_var = Matrix::Identity(r, r) - gain * p.loadings;
  Matrix x = d.values().colwise() - d.values().rowwise().mean();
  Matrix sxf = Matrix::Zero(n, r), sff = Matrix::Zero(r, r), sxx = Matrix::Zero(n, n);
  for (Eigen::Index k = 0; k < t; ++k) {
    Vector xt = x.col(k);
    Vector mt = gain * xt;
    sxf += xt * mt.transpose();
    sff += post_var + mt * mt.transpose();
    sxx += xt * xt.transpose();
  }
  FactorParams out;
  out.loadings = sxf * sff.inverse();
  out.idio_var = (sxx - out.loadings * sxf.transpose()).diagonal() / static_cast<double>(t);
  out.factor_cov = Matrix::Identity(r, r);
  out.intercept = p.intercept;
  return out;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline double rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace testutil

#endif  // FACTORML_TESTS_HELPERS_HPP
