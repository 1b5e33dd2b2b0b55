// Factor scores for a fitted model.
//
// Both estimators are linear in z_t - zbar, where zbar is the time average of
// the dataset being scored (not of the data the model was fitted on), so a
// model can score new data.
//
//   projection  f~_t = (M_ff^{-1} + L' D^{-1} L)^{-1} L' D^{-1} (z_t - zbar)
//   GLS         f^_t = (L' D^{-1} L)^{-1} L' D^{-1} (z_t - zbar)
//
// GLS scores do not change when D is multiplied by a positive constant;
// projection scores do.
#ifndef FACTORML_SCORES_HPP
#define FACTORML_SCORES_HPP

#include "factorml/model.hpp"

namespace factorml {

enum class ScoreMethod { Projection, Gls };

struct FactorScores {
  Matrix values;  // T x r
  ScoreMethod method = ScoreMethod::Gls;
};

FactorScores projection_scores(const Dataset& d, const FactorParams& p);
FactorScores gls_scores(const Dataset& d, const FactorParams& p);
FactorScores factor_scores(const Dataset& d, const FactorParams& p, ScoreMethod method = ScoreMethod::Gls);

/// max_t || f~_t - f^_t ||.
double score_gap(const Dataset& d, const FactorParams& p);

}  // namespace factorml

#endif  // FACTORML_SCORES_HPP
