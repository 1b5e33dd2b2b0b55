#include <doctest.h>

#include "factorml/scores.hpp"
#include "helpers.hpp"

using namespace factorml;
using namespace testutil;

TEST_CASE("projection scores equal the Gaussian posterior mean") {
  std::mt19937_64 g(201);
  for (int rep = 0; rep < 10; ++rep) {
    FactorParams p = random_params(g, 15 + rep, 1 + rep % 3, true);
    Dataset d = simulate(g, p, 30);
    Matrix x = d.demeaned().values();
    // E[f | z] = M_ff L' S^{-1} x for jointly normal (f, z)
    Matrix expected = (p.factor_cov * p.loadings.transpose() * dense_sigma(p).ldlt().solve(x)).transpose();
    CHECK(rel_diff(projection_scores(d, p).values, expected) < 1e-10);
  }
}

TEST_CASE("GLS scores equal weighted least squares") {
  std::mt19937_64 g(202);
  for (int rep = 0; rep < 10; ++rep) {
    FactorParams p = random_params(g, 15 + rep, 1 + rep % 3);
    Dataset d = simulate(g, p, 30);
    Matrix x = d.demeaned().values();
    Matrix w = p.idio_var.cwiseInverse().cwiseSqrt().asDiagonal();
    Matrix expected = (w * p.loadings).colPivHouseholderQr().solve(w * x).transpose();
    CHECK(rel_diff(gls_scores(d, p).values, expected) < 1e-10);
    // invariant to a common rescaling of the variances
    FactorParams q = p;
    q.idio_var *= 7.0;
    CHECK(rel_diff(gls_scores(d, q).values, expected) < 1e-10);
  }
}

TEST_CASE("closed forms for one factor") {
  const Eigen::Index n = 5, t = 4;
  Matrix z(n, t);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index s = 0; s < t; ++s) z(i, s) = static_cast<double>((i + 1) * (s * s) % 7) - 1.5 * i;
  Dataset d(z);
  Matrix x = d.demeaned().values();
  FactorParams p;
  p.loadings = Matrix::Ones(n, 1);
  p.idio_var = Vector::Ones(n);
  p.factor_cov = Matrix::Identity(1, 1);
  p.intercept = Vector::Zero(n);
  Matrix proj = projection_scores(d, p).values;
  Matrix gls = gls_scores(d, p).values;
  for (Eigen::Index s = 0; s < t; ++s) {
    CHECK(proj(s, 0) == doctest::Approx(x.col(s).sum() / (1.0 + n)));
    CHECK(gls(s, 0) == doctest::Approx(x.col(s).sum() / n));
  }
  // a period sitting at the sample mean scores zero
  Matrix z2 = z;
  z2.col(3) = z.leftCols(3).rowwise().mean();
  Dataset d2(z2);
  CHECK(d2.demeaned().values().col(3).norm() < 1e-12);
  CHECK(std::abs(projection_scores(d2, p).values(3, 0)) < 1e-12);
  CHECK(std::abs(gls_scores(d2, p).values(3, 0)) < 1e-12);
}

TEST_CASE("noiseless data: GLS recovers the factors exactly") {
  std::mt19937_64 g(203);
  FactorParams p = random_params(g, 12, 2);
  Matrix f = gaussian(g, 2, 25);
  f = f.colwise() - f.rowwise().mean();  // mean-zero so demeaning leaves it intact
  Dataset d(p.loadings * f);
  CHECK(rel_diff(gls_scores(d, p).values, Matrix(f.transpose())) < 1e-10);
}

TEST_CASE("score_gap is the largest row-wise difference and vanishes for strong factors") {
  std::mt19937_64 g(204);
  FactorParams p = random_params(g, 20, 2);
  Dataset d = simulate(g, p, 40);
  Matrix diff = projection_scores(d, p).values - gls_scores(d, p).values;
  CHECK(score_gap(d, p) == doctest::Approx(diff.rowwise().norm().maxCoeff()));
  FactorParams big = p;
  big.factor_cov *= 1e12;
  CHECK(score_gap(d, big) < 1e-9);
  CHECK(factor_scores(d, p, ScoreMethod::Projection).method == ScoreMethod::Projection);
}

TEST_CASE("scores reject mismatched shapes and rank-deficient loadings") {
  std::mt19937_64 g(205);
  FactorParams p = random_params(g, 10, 2);
  Dataset wrong = simulate(g, random_params(g, 9, 2), 20);
  CHECK_THROWS_AS(gls_scores(wrong, p), InvalidInput);
  CHECK_THROWS_AS(projection_scores(wrong, p), InvalidInput);
  Dataset d = simulate(g, p, 20);
  FactorParams q = p;
  q.loadings.col(1) = q.loadings.col(0);
  CHECK_THROWS_AS(gls_scores(d, q), RankError);
}
