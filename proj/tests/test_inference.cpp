#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "factorml/em.hpp"
#include "factorml/identify.hpp"
#include "factorml/inference.hpp"
#include "helpers.hpp"

using namespace factorml;
using namespace testutil;

namespace {

bool symmetric_psd(const Matrix& a) {
  if (a.size() == 0) return true;
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff())) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  return es.eigenvalues().minCoeff() >= -1e-12;
}

Matrix skew(std::mt19937_64& g, Eigen::Index r) {
  Matrix a = gaussian(g, r, r);
  return a - a.transpose();
}

FactorEstimate sample_fit(std::uint64_t seed, Eigen::Index n, Eigen::Index r, Eigen::Index t = 150) {
  std::mt19937_64 g(seed);
  FactorParams truth = random_params(g, n, r);
  for (Eigen::Index k = 1; k < r; ++k) truth.loadings.col(k) *= std::pow(0.7, static_cast<double>(k));
  return fit(simulate(g, truth, t), r);
}

}  // namespace

TEST_CASE("vec, vech, veck and kron") {
  Matrix a(3, 3);
  a << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Vector v = vec(a);
  CHECK(v(1) == 4.0);
  CHECK(v(3) == 2.0);
  Vector h = vech(a);
  REQUIRE(h.size() == 6);
  CHECK((h.array() == (Eigen::ArrayXd(6) << 1, 4, 7, 5, 8, 9).finished()).all());
  Vector k = veck(a);
  REQUIRE(k.size() == 3);
  CHECK((k.array() == (Eigen::ArrayXd(3) << 4, 7, 8).finished()).all());
  Matrix b(1, 2);
  b << 1, -1;
  Matrix kr = kron(Matrix::Identity(2, 2), b);
  CHECK(kr.rows() == 2);
  CHECK(kr.cols() == 4);
  CHECK(kr(1, 2) == 1.0);
  CHECK(kr(1, 3) == -1.0);
  CHECK(kr(0, 2) == 0.0);
}

TEST_CASE("duplication matrix and its inverse") {
  CHECK(dup_matrix(1) == Matrix::Ones(1, 1));
  Matrix d2(4, 3);
  d2 << 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1;
  CHECK(dup_matrix(2) == d2);
  std::mt19937_64 g(301);
  for (Eigen::Index r = 1; r <= 5; ++r) {
    Matrix a = gaussian(g, r, r);
    Matrix s = a + a.transpose();
    CHECK(rel_diff(Matrix(dup_matrix(r) * vech(s)), Matrix(vec(s))) < 1e-14);
    CHECK(rel_diff(Matrix(dup_matrix_pinv(r) * vec(s)), Matrix(vech(s))) < 1e-14);
    // Moore-Penrose inverse from a generic decomposition
    Matrix pinv = dup_matrix(r).completeOrthogonalDecomposition().pseudoInverse();
    CHECK(rel_diff(dup_matrix_pinv(r), pinv) < 1e-12);
  }
  CHECK_THROWS_AS(dup_matrix(0), InvalidInput);
}

TEST_CASE("diagonal selector") {
  Matrix j2(2, 4);
  j2 << 1, 0, 0, 0, 0, 0, 0, 1;
  CHECK(diag_selector(2) == j2);
  std::mt19937_64 g(302);
  Matrix m = gaussian(g, 4, 4);
  CHECK(rel_diff(Matrix(diag_selector(4) * vec(m)), Matrix(m.diagonal())) < 1e-15);
}

TEST_CASE("generalized duplication matrix: printed examples") {
  const double m1 = 3.0, m2 = 5.0, m3 = 0.5;
  CHECK(gen_dup_tilde(Matrix::Constant(1, 1, 2.5)) == Matrix::Ones(1, 1));

  Matrix two(4, 3);
  two << 1, 0, 0,
         0, 1, 0,
         0, -m2 / m1, 0,
         0, 0, 1;
  CHECK(gen_dup_tilde(Vector((Vector(2) << m1, m2).finished()).asDiagonal()) == two);

  Matrix three(9, 6);
  three << 1, 0, 0, 0, 0, 0,
           0, 1, 0, 0, 0, 0,
           0, 0, 1, 0, 0, 0,
           0, -m2 / m1, 0, 0, 0, 0,
           0, 0, 0, 1, 0, 0,
           0, 0, 0, 0, 1, 0,
           0, 0, -m3 / m1, 0, 0, 0,
           0, 0, 0, 0, -m3 / m2, 0,
           0, 0, 0, 0, 0, 1;
  CHECK(gen_dup_tilde(Vector((Vector(3) << m1, m2, m3).finished()).asDiagonal()) == three);
}

TEST_CASE("generalized duplication matrix: structure for r <= 5") {
  std::mt19937_64 g(303);
  for (Eigen::Index r = 1; r <= 5; ++r) {
    Vector m = uniform(g, r, 0.5, 4.0);
    Matrix dt = gen_dup_tilde(m.asDiagonal());
    CHECK(dt.rows() == r * r);
    CHECK(dt.cols() == r * (r + 1) / 2);
    for (int rep = 0; rep < 20; ++rep) {
      Vector v = gaussian(g, r * (r + 1) / 2, 1);
      Vector out = dt * v;
      Matrix a = Eigen::Map<Matrix>(out.data(), r, r);
      // the lower triangle carries v; M A + A' M has no off-diagonal part
      CHECK(rel_diff(Matrix(vech(a)), Matrix(v)) < 1e-14);
      Matrix c = m.asDiagonal() * a + a.transpose() * m.asDiagonal();
      c.diagonal().setZero();
      CHECK(c.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = 0.0;
  CHECK_THROWS_AS(gen_dup_tilde(bad), InvalidInput);
  bad(1, 1) = 1.0;
  bad(0, 1) = 0.1;
  CHECK_THROWS_AS(gen_dup_tilde(bad), InvalidInput);
}

TEST_CASE("skew duplication matrix: printed examples and property") {
  CHECK(gen_dup_bar(1).rows() == 1);
  CHECK(gen_dup_bar(1).cols() == 0);
  Matrix two(4, 1);
  two << 0, 1, -1, 0;
  CHECK(gen_dup_bar(2) == two);
  Matrix three(9, 3);
  three << 0, 0, 0,
           1, 0, 0,
           0, 1, 0,
           -1, 0, 0,
           0, 0, 0,
           0, 0, 1,
           0, -1, 0,
           0, 0, -1,
           0, 0, 0;
  CHECK(gen_dup_bar(3) == three);

  std::mt19937_64 g(304);
  for (int rep = 0; rep < 1000; ++rep) {
    const Eigen::Index r = 1 + rep % 5;
    Matrix a = skew(g, r);
    CHECK(rel_diff(Matrix(gen_dup_bar(r) * veck(a)), Matrix(vec(a))) < 1e-15);
  }
}

TEST_CASE("loading covariance") {
  FactorEstimate e = sample_fit(311, 20, 2);
  e.params.idio_var(4) = 2.0;
  LoadingCov c = loading_cov(e, 4);
  CHECK(rel_diff(c.cov, Matrix(Matrix::Identity(2, 2) * 2.0 / 150.0)) < 1e-14);
  CHECK(c.variable == 4);
  CHECK_THROWS_AS(loading_cov(e, 20), InvalidInput);

  for (auto tag : {IdentificationTag::IC1, IdentificationTag::IC2, IdentificationTag::IC3}) {
    FactorEstimate t = to_ic(e, tag);
    for (Eigen::Index j = 0; j < 20; ++j) CHECK(symmetric_psd(loading_cov(t, j).cov));
  }
  // IC2: M_ff^{-1} sigma_j^2 / T
  FactorEstimate e2 = to_ic2(e);
  CHECK(rel_diff(loading_cov(e2, 7).cov, Matrix(e2.params.factor_cov.inverse() * e2.params.idio_var(7) / 150.0)) <
        1e-12);
  CHECK_THROWS_AS(loading_cov(to_ic4(e), 0), UnsupportedTag);
  CHECK_THROWS_AS(loading_cov(to_ic5(e), 0), UnsupportedTag);
}

TEST_CASE("IC1 loading covariance collapses when the first-block noise vanishes") {
  FactorEstimate e = to_ic1(sample_fit(312, 15, 2));
  e.params.idio_var.head(2).setConstant(1e-300);
  const Eigen::Index j = 9;
  Matrix expected = e.params.factor_cov.inverse() * e.params.idio_var(j) / 150.0;
  CHECK(rel_diff(loading_cov(e, j).cov, expected) < 1e-12);
}

TEST_CASE("factor moment covariance") {
  FactorEstimate e = sample_fit(313, 20, 2);
  FactorCovCov z = mff_cov(e);
  CHECK(z.cov.isZero(0.0));
  CHECK(z.cov.rows() == 3);
  CHECK(mff_cov(to_ic5(e)).cov.isZero(0.0));

  FactorEstimate one = to_ic1(sample_fit(314, 12, 1));
  FactorCovCov c1 = mff_cov(one);
  CHECK(c1.cov(0, 0) == doctest::Approx(4.0 * one.params.idio_var(0) * one.params.factor_cov(0, 0) / 150.0));
  CHECK(c1.layout == FactorCovCov::Layout::Vech);
  CHECK(c1.rate == Rate::SqrtT);

  for (auto tag : {IdentificationTag::IC1, IdentificationTag::IC2, IdentificationTag::IC4}) {
    FactorCovCov c = mff_cov(to_ic(e, tag));
    CHECK(symmetric_psd(c.cov));
  }
  FactorCovCov c2 = mff_cov(to_ic2(e));
  CHECK(c2.rate == Rate::SqrtNT);
  CHECK(c2.layout == FactorCovCov::Layout::Diag);
  CHECK(c2.cov.rows() == 2);
  CHECK(mff_cov(to_ic4(e)).cov.rows() == 2);
}

TEST_CASE("idiosyncratic variance covariance") {
  FactorEstimate e = sample_fit(315, 10, 1);
  e.params.idio_var(2) = 3.0;
  CHECK(idio_var_cov(e, 2) == doctest::Approx(18.0 / 150.0));
  CHECK(idio_var_cov(e, 2, 0.0) == idio_var_cov(e, 2));
  CHECK(idio_var_cov(e, 2, 1.0) == doctest::Approx(27.0 / 150.0));
  CHECK(idio_var_cov(e, 2, -2.0) == 0.0);
  CHECK_THROWS_AS(idio_var_cov(e, 2, -2.5), InvalidKurtosis);
  CHECK_THROWS_AS(idio_var_cov(e, 10), InvalidInput);
}

TEST_CASE("residual kurtosis is near zero for normal errors") {
  std::mt19937_64 g(316);
  FactorParams truth = random_params(g, 30, 1);
  Dataset d = simulate(g, truth, 4000);
  FactorEstimate e = fit(d, 1);
  Vector k = residual_excess_kurtosis(d, e.params);
  CHECK(std::abs(k.mean()) < 0.1);
}

TEST_CASE("score covariance") {
  FactorEstimate e = sample_fit(317, 30, 2);
  Vector f(2);
  f << 0.3, -1.2;
  const double n = 30.0;
  Matrix q = e.params.loadings.transpose() * e.params.idio_var.cwiseInverse().asDiagonal() * e.params.loadings / n;

  ScoreCov c3 = score_cov(e, f, 30, 150);
  CHECK(rel_diff(c3.cov, Matrix(q.inverse() / n)) < 1e-12);
  CHECK(c3.delta == doctest::Approx(0.2));

  ScoreCov c2 = score_cov(to_ic2(e), f, 30, 150);
  CHECK(c2.cov == Matrix(Matrix::Identity(2, 2) / n));

  // IC1 with N/T -> 0 is the IC3-type formula for the IC1 parameters
  FactorEstimate e1 = to_ic1(e);
  Matrix q1 = e1.params.loadings.transpose() * e1.params.idio_var.cwiseInverse().asDiagonal() * e1.params.loadings / n;
  ScoreCov c1 = score_cov(e1, f, 30, 30000000000000000);
  CHECK(rel_diff(c1.cov, Matrix(q1.inverse() / n)) < 1e-12);
  CHECK(symmetric_psd(score_cov(e1, f, 30, 150).cov));
  CHECK(symmetric_psd(c3.cov));

  CHECK_THROWS_AS(score_cov(to_ic4(e), f, 30, 150), UnsupportedTag);
  CHECK_THROWS_AS(score_cov(to_ic5(e), f, 30, 150), UnsupportedTag);
  CHECK_THROWS_AS(score_cov(e, Vector::Zero(3), 30, 150), InvalidInput);
}
