#ifndef FACTORML_ESTIMATE_HPP
#define FACTORML_ESTIMATE_HPP

#include <array>
#include <string>
#include <vector>

#include "factorml/model.hpp"

namespace factorml {

/// Record of one EM run.
struct EMTrace {
  int iterations = 0;
  std::vector<double> loglik_path;  // value at the start point, then after every step
  bool converged = false;
  double final_param_delta = 0.0;
  std::array<double, 3> final_foc_residuals{0.0, 0.0, 0.0};
  // Some variance sat on the floor > 10 steps in a row, or ended below 1e-3 of
  // its sample variance with the likelihood still rising toward zero.
  bool heywood = false;
  std::vector<Eigen::Index> pinned;  // variables on or heading to the boundary at the end

  /// Largest drop between successive likelihood values (0 when monotone).
  double max_loglik_decrease() const;
};

/// A fitted model together with the normalization it satisfies.
struct FactorEstimate {
  FactorParams params;
  IdentificationTag tag = IdentificationTag::IC3;
  double loglik = 0.0;
  Eigen::Index n_obs = 0;  // T of the fitting data
  EMTrace trace;
  std::vector<std::string> warnings;
};

}  // namespace factorml

#endif  // FACTORML_ESTIMATE_HPP
