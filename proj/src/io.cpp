#include "factorml/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace factorml {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_number(std::string_view s, double& v) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void csv_error(const std::string& source, std::size_t line, const std::string& what) {
  throw InvalidInput(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset parse_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::size_t blank_since = 0;  // first blank line of a trailing run
  bool seen_first = false;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) {
      if (blank_since == 0) blank_since = line_no;
      continue;
    }
    if (blank_since != 0 && seen_first) csv_error(source, blank_since, "empty line inside the data");
    blank_since = 0;

    auto fields = split_fields(view);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size() && numeric; ++k) numeric = parse_number(fields[k], values[k]);

    if (!seen_first) {
      seen_first = true;
      width = fields.size();
      if (!numeric) continue;  // header row
    }
    if (fields.size() != width)
      csv_error(source, line_no, "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (fields[k].empty()) csv_error(source, line_no, "missing value in column " + std::to_string(k + 1));
      if (!parse_number(fields[k], values[k]))
        csv_error(source, line_no, "cannot parse '" + std::string(fields[k]) + "' in column " + std::to_string(k + 1));
      if (!std::isfinite(values[k]))
        csv_error(source, line_no, "non-finite value in column " + std::to_string(k + 1));
    }
    rows.push_back(std::move(values));
  }
  if (in.bad()) throw InvalidInput(source + ": read error");
  if (rows.size() < 2) throw InvalidInput(source + ": need at least two data rows");

  Matrix z(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < width; ++i) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = rows[t][i];
  return Dataset(std::move(z));
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return parse_csv(in, path);
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidInput("cannot format number");
  return std::string(buf, ptr);
}

void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header) {
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw InvalidInput("header width mismatch");
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    out << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidInput(std::string("model document lacks '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw InvalidInput(std::string("'") + what + "' must be a number");
  return j.get<double>();
}

Matrix matrix_from(const json& j, const char* what) {
  if (!j.is_array()) throw InvalidInput(std::string("'") + what + "' must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InvalidInput(std::string("'") + what + "' has ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = number(row.at(static_cast<std::size_t>(c)), what);
  }
  return m;
}

Vector vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw InvalidInput(std::string("'") + what + "' must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j.at(i), what);
  return v;
}

const char* layout_name(FactorCovCov::Layout l) { return l == FactorCovCov::Layout::Vech ? "vech" : "diag"; }
const char* rate_name(Rate r) { return r == Rate::SqrtT ? "sqrt_T" : "sqrt_NT"; }

}  // namespace

json to_json(const FitResult& r) {
  const FactorEstimate& e = r.estimate;
  const FactorParams& p = e.params;
  json j;
  j["schema"] = kFitResultSchema;
  j["n_vars"] = p.n_vars();
  j["n_factors"] = p.n_factors();
  j["n_obs"] = e.n_obs;
  j["ic"] = std::string(to_string(e.tag));
  j["loadings"] = matrix_json(p.loadings);
  j["idio_var"] = vector_json(p.idio_var);
  j["factor_cov"] = matrix_json(p.factor_cov);
  j["intercept"] = vector_json(p.intercept);
  j["loglik"] = e.loglik;
  j["iterations"] = e.trace.iterations;
  j["converged"] = e.trace.converged;
  j["heywood"] = e.trace.heywood;
  j["pinned"] = e.trace.pinned;
  j["foc_residuals"] = {{"loadings", e.trace.final_foc_residuals[0]},
                        {"idio_var", e.trace.final_foc_residuals[1]},
                        {"factor_cov", e.trace.final_foc_residuals[2]}};
  if (r.se) {
    json se;
    se["loadings"] = r.se->loadings ? matrix_json(*r.se->loadings) : json(nullptr);
    se["idio_var"] = vector_json(r.se->idio_var);
    se["kurtosis_adjusted"] = r.se->kurtosis_adjusted;
    if (r.se->factor_cov) {
      se["factor_cov"] = {{"layout", layout_name(r.se->factor_cov->layout)},
                          {"rate", rate_name(r.se->factor_cov->rate)},
                          {"cov", matrix_json(r.se->factor_cov->cov)}};
    } else {
      se["factor_cov"] = nullptr;
    }
    j["standard_errors"] = std::move(se);
  }
  j["warnings"] = e.warnings;
  return j;
}

FitResult fit_result_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("model document must be a JSON object");
  const json& schema = field(j, "schema");
  if (!schema.is_string() || schema.get<std::string>() != kFitResultSchema)
    throw InvalidInput(std::string("unsupported model schema; expected ") + kFitResultSchema);

  FitResult out;
  FactorEstimate& e = out.estimate;
  const json& ic = field(j, "ic");
  if (!ic.is_string()) throw InvalidInput("'ic' must be a string");
  e.tag = parse_tag(ic.get<std::string>());
  e.params.loadings = matrix_from(field(j, "loadings"), "loadings");
  e.params.idio_var = vector_from(field(j, "idio_var"), "idio_var");
  e.params.factor_cov = matrix_from(field(j, "factor_cov"), "factor_cov");
  e.params.intercept = vector_from(field(j, "intercept"), "intercept");
  e.params.validate();
  e.n_obs = static_cast<Eigen::Index>(number(field(j, "n_obs"), "n_obs"));
  e.loglik = number(field(j, "loglik"), "loglik");
  e.trace.iterations = static_cast<int>(number(field(j, "iterations"), "iterations"));
  e.trace.converged = field(j, "converged").get<bool>();
  if (j.contains("heywood")) e.trace.heywood = j.at("heywood").get<bool>();
  if (j.contains("pinned")) e.trace.pinned = j.at("pinned").get<std::vector<Eigen::Index>>();
  const json& foc = field(j, "foc_residuals");
  e.trace.final_foc_residuals = {number(field(foc, "loadings"), "foc_residuals"),
                                 number(field(foc, "idio_var"), "foc_residuals"),
                                 number(field(foc, "factor_cov"), "foc_residuals")};
  if (j.contains("warnings")) e.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (number(field(j, "n_vars"), "n_vars") != static_cast<double>(e.params.n_vars()) ||
      number(field(j, "n_factors"), "n_factors") != static_cast<double>(e.params.n_factors()))
    throw InvalidInput("n_vars / n_factors disagree with the parameter shapes");

  if (j.contains("standard_errors") && !j.at("standard_errors").is_null()) {
    const json& s = j.at("standard_errors");
    StandardErrors se;
    if (!field(s, "loadings").is_null()) se.loadings = matrix_from(s.at("loadings"), "standard_errors.loadings");
    se.idio_var = vector_from(field(s, "idio_var"), "standard_errors.idio_var");
    se.kurtosis_adjusted = field(s, "kurtosis_adjusted").get<bool>();
    const json& fc = field(s, "factor_cov");
    if (!fc.is_null()) {
      FactorCovCov c;
      c.ic = e.tag;
      c.layout = field(fc, "layout").get<std::string>() == "vech" ? FactorCovCov::Layout::Vech
                                                                   : FactorCovCov::Layout::Diag;
      c.rate = field(fc, "rate").get<std::string>() == "sqrt_T" ? Rate::SqrtT : Rate::SqrtNT;
      c.cov = matrix_from(field(fc, "cov"), "standard_errors.factor_cov.cov");
      se.factor_cov = std::move(c);
    }
    out.se = std::move(se);
  }
  return out;
}

FitResult read_fit_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw InvalidInput(path + ": " + ex.what());
  }
  try {
    return fit_result_from_json(j);
  } catch (const json::exception& ex) {
    throw InvalidInput(path + ": " + ex.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json to_json(const MonteCarloReport& r, bool include_timing) {
  json j;
  j["schema"] = kSimulationSchema;
  j["kind"] = "comparison";
  j["reps"] = r.reps;
  j["seed"] = r.seed;
  json cells = json::array();
  for (const CellStats& c : r.cells) {
    cells.push_back({{"N", c.n_vars},
                     {"T", c.n_obs},
                     {"mle_loadings", c.mle_loadings},
                     {"mle_factors", c.mle_factors},
                     {"mle_idio_var", c.mle_variances},
                     {"pc_loadings", c.pc_loadings},
                     {"pc_factors", c.pc_factors},
                     {"pc_idio_var", c.pc_variances},
                     {"mle_projection_factors", c.mle_projection_factors},
                     {"completed", c.completed},
                     {"failed", c.failed},
                     {"nonconverged", c.nonconverged},
                     {"heywood", c.heywood},
                     {"em_iterations", c.em_iterations},
                     {"loglik_decreases", c.loglik_decreases},
                     {"max_loglik_decrease", c.max_loglik_decrease}});
  }
  j["cells"] = std::move(cells);
  if (include_timing) j["elapsed_seconds"] = r.elapsed_seconds;
  return j;
}

json to_json(const RateReport& r, bool include_timing) {
  json j;
  j["schema"] = kSimulationSchema;
  j["kind"] = "rate";
  j["reps"] = r.reps;
  j["seed"] = r.seed;
  json cells = json::array();
  for (const RateCell& c : r.cells) {
    cells.push_back({{"N", c.n_vars},
                     {"T", c.n_obs},
                     {"mle_mse", c.mle_mse},
                     {"pc_mse", c.pc_mse},
                     {"median_score_gap", c.median_score_gap},
                     {"completed", c.completed},
                     {"failed", c.failed}});
  }
  j["cells"] = std::move(cells);
  if (include_timing) j["elapsed_seconds"] = r.elapsed_seconds;
  return j;
}

void write_comparison_csv(std::ostream& out, const MonteCarloReport& r) {
  out << "N,T,MLE-Lambda,MLE-F,MLE-Sigma_ee,PC-Lambda,PC-F,PC-Sigma_ee\n";
  for (const CellStats& c : r.cells) {
    out << c.n_vars << ',' << c.n_obs << ',' << format_double(c.mle_loadings) << ','
        << format_double(c.mle_factors) << ',' << format_double(c.mle_variances) << ','
        << format_double(c.pc_loadings) << ',' << format_double(c.pc_factors) << ','
        << format_double(c.pc_variances) << '\n';
  }
}

}  // namespace factorml
