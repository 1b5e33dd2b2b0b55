// Normalizations that pin down the rotation of (L, M_ff):
//
//   IC1  top r x r block of L is I_r, M_ff unrestricted
//   IC2  (1/N) L' D^{-1} L = I_r, M_ff diagonal, descending
//   IC3  M_ff = I_r, (1/N) L' D^{-1} L diagonal, descending
//   IC4  M_ff diagonal, top block lower triangular with unit diagonal
//   IC5  M_ff = I_r, top block lower triangular with nonzero diagonal
//
// Every transform first brings its input to IC3, so any tagged estimate is
// accepted. Sigma_ee, L M_ff L' and the likelihood are unchanged.
//
// to_ic5 returns the QR output (M_ff = I_r) and to_ic4 its rescaling to a
// unit-diagonal block with diagonal M_ff.
#ifndef FACTORML_IDENTIFY_HPP
#define FACTORML_IDENTIFY_HPP

#include <string>
#include <vector>

#include "factorml/estimate.hpp"

namespace factorml {

struct Ic3Rotation {
  FactorParams params;
  Vector diagonal;   // diag of (1/N) L' D^{-1} L, descending
  bool distinct = true;
};

/// Absorbs M_ff into the loadings and rotates by the eigenvectors of
/// (1/N) L' D^{-1} L. Column signs follow normalize_column_signs.
Ic3Rotation rotate_to_ic3(const FactorParams& p);

FactorEstimate to_ic1(const FactorEstimate& e);
FactorEstimate to_ic2(const FactorEstimate& e);
FactorEstimate to_ic3(const FactorEstimate& e);
FactorEstimate to_ic4(const FactorEstimate& e);
FactorEstimate to_ic5(const FactorEstimate& e);
FactorEstimate to_ic(const FactorEstimate& e, IdentificationTag tag);

/// Signs s in {-1, +1}^r maximizing sum_k s_k <est_k, truth_k>.
Vector align_to_truth(const Matrix& est, const Matrix& truth);

struct InvariantCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured violation
  double tolerance = 0.0;
};

/// Re-checks the restrictions of `tag` on p. Tolerances are relative.
std::vector<InvariantCheck> check_identification(const FactorParams& p, IdentificationTag tag,
                                                 double tol = 1e-8);
bool all_passed(const std::vector<InvariantCheck>& checks);

}  // namespace factorml

#endif  // FACTORML_IDENTIFY_HPP
