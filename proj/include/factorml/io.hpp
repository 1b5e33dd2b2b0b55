// File formats: CSV panels and matrices, the JSON model document, and the
// simulation report tables. docs/formats.md describes each one.
#ifndef FACTORML_IO_HPP
#define FACTORML_IO_HPP

#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "factorml/estimate.hpp"
#include "factorml/inference.hpp"
#include "factorml/montecarlo.hpp"

namespace factorml {

inline constexpr const char* kFitResultSchema = "factorml.fit-result/1";
inline constexpr const char* kSimulationSchema = "factorml.simulation/1";

/// Parses a panel with one row per time point and one column per variable.
/// A first row that does not parse as numbers is taken as a header. Errors
/// name `source` and the 1-based line number.
Dataset parse_csv(std::istream& in, const std::string& source = "<input>");
Dataset read_csv(const std::string& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// One row per matrix row, comma-separated, full precision.
void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header = {});

/// Standard errors attached to a fit when requested. Empty pieces were not
/// available for the fit's tag; the reason sits in FitResult::warnings.
struct StandardErrors {
  std::optional<Matrix> loadings;   // N x r
  Vector idio_var;                  // N
  std::optional<FactorCovCov> factor_cov;
  bool kurtosis_adjusted = false;
};

struct FitResult {
  FactorEstimate estimate;
  std::optional<StandardErrors> se;
};

nlohmann::json to_json(const FitResult& r);
/// Throws InvalidInput when the document is malformed or inconsistent.
FitResult fit_result_from_json(const nlohmann::json& j);
FitResult read_fit_result(const std::string& path);

/// Compact serialization with a trailing newline.
std::string dump(const nlohmann::json& j);

/// Elapsed time is left out unless asked for, so repeated runs give
/// identical bytes.
nlohmann::json to_json(const MonteCarloReport& r, bool include_timing = false);
nlohmann::json to_json(const RateReport& r, bool include_timing = false);

/// Table with columns N,T,MLE-Lambda,MLE-F,MLE-Sigma_ee,PC-Lambda,PC-F,PC-Sigma_ee.
void write_comparison_csv(std::ostream& out, const MonteCarloReport& r);

}  // namespace factorml

#endif  // FACTORML_IO_HPP
