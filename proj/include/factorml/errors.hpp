#ifndef FACTORML_ERRORS_HPP
#define FACTORML_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace factorml {

/// Base of every error raised by the library.
class FactorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-domain input (non-finite data, shape mismatch, ...).
class InvalidInput : public FactorError {
 public:
  using FactorError::FactorError;
};

/// The r x r matrix M_ff^{-1} + L' D^{-1} L (or a sibling r x r system)
/// could not be factorized. Carries the reciprocal-condition estimate.
class IllConditioned : public FactorError {
 public:
  IllConditioned(const std::string& what, double rcond)
      : FactorError(what), rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

/// A matrix that has to be of full column rank is not.
class RankError : public FactorError {
 public:
  using FactorError::FactorError;
};

/// The top r x r block of the loadings cannot carry a triangular or
/// identity restriction; reorder the variables.
class FirstRowsUnsuitable : public FactorError {
 public:
  using FactorError::FactorError;
};

/// Two diagonal values that have to be strictly ordered coincide.
class NonIdentifiedOrdering : public FactorError {
 public:
  using FactorError::FactorError;
};

/// Closed-form covariance not available for the requested identification.
class UnsupportedTag : public FactorError {
 public:
  using FactorError::FactorError;
};

class InvalidKurtosis : public FactorError {
 public:
  using FactorError::FactorError;
};

/// Monte Carlo run with too many failed replications.
class HarnessError : public FactorError {
 public:
  using FactorError::FactorError;
};

}  // namespace factorml

#endif  // FACTORML_ERRORS_HPP
