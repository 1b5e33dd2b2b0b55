// EM maximization of the quasi likelihood with M_ff = I_r as the working
// normalization. The final iterate is rotated so that (1/N) L' D^{-1} L is
// diagonal with descending entries, which is IC3.
#ifndef FACTORML_EM_HPP
#define FACTORML_EM_HPP

#include <cstdint>
#include <optional>
#include <variant>

#include "factorml/estimate.hpp"
#include "factorml/model.hpp"

namespace factorml {

struct PcaInit {};
struct ProvidedInit {
  FactorParams params;
};
struct RandomInit {
  std::uint64_t seed = 0;
};
using EMInit = std::variant<PcaInit, ProvidedInit, RandomInit>;

struct EMConfig {
  int max_iter = 5000;
  /// Stop when ||theta_new - theta|| / (1 + ||theta||) < tol, theta = (L, idio_var).
  double tol = 1e-6;
  /// Stop when |loglik_new - loglik| < loglik_tol; 0 disables the rule.
  double loglik_tol = 1e-9;
  EMInit init = PcaInit{};
  /// Absolute variance box; unset bounds default to 1e-8 and 1e8 times the
  /// mean sample variance.
  std::optional<double> var_floor;
  std::optional<double> var_ceiling;

  void validate() const;
  VarianceBox box_for(const Matrix& m_zz) const;
};

/// One EM update under M_ff = I_r. Variances are clamped into `box`.
FactorParams em_step(const Matrix& m_zz, const FactorParams& p, const VarianceBox& box);

/// Runs EM to convergence and returns an IC3-tagged estimate. Non-convergence
/// and variances stuck on the floor are reported through trace and warnings.
FactorEstimate fit(const Dataset& d, Eigen::Index r, const EMConfig& cfg = {});

}  // namespace factorml

#endif  // FACTORML_EM_HPP
