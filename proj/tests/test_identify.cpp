#include <doctest.h>

#include "factorml/em.hpp"
#include "factorml/identify.hpp"
#include "helpers.hpp"

using namespace factorml;
using namespace testutil;

namespace {

FactorEstimate fitted(std::uint64_t seed, Eigen::Index n, Eigen::Index r) {
  std::mt19937_64 g(seed);
  FactorParams truth = random_params(g, n, r);
  for (Eigen::Index k = 1; k < r; ++k) truth.loadings.col(k) *= std::pow(0.7, static_cast<double>(k));
  Dataset d = simulate(g, truth, 120);
  EMConfig cfg;
  cfg.tol = 1e-9;
  return fit(d, r, cfg);
}

Matrix implied_common(const FactorParams& p) { return p.loadings * p.factor_cov * p.loadings.transpose(); }

constexpr IdentificationTag kTags[] = {IdentificationTag::IC1, IdentificationTag::IC2, IdentificationTag::IC3,
                                       IdentificationTag::IC4, IdentificationTag::IC5};

}  // namespace

TEST_CASE("every transform satisfies its own restrictions and keeps the fit") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Eigen::Index r = 1 + static_cast<Eigen::Index>(seed % 3);
    FactorEstimate base = fitted(seed, 25, r);
    Matrix common = implied_common(base.params);
    for (auto tag : kTags) {
      CAPTURE(to_string(tag));
      FactorEstimate e = to_ic(base, tag);
      CHECK(e.tag == tag);
      CHECK(all_passed(check_identification(e.params, tag)));
      CHECK(rel_diff(implied_common(e.params), common) < 1e-10);
      CHECK((e.params.idio_var - base.params.idio_var).norm() == 0.0);
      CHECK(rel_diff(e.loglik, base.loglik) < 1e-12);
    }
  }
}

TEST_CASE("transforms compose: any tag to any tag") {
  FactorEstimate base = fitted(31, 20, 2);
  for (auto from : kTags) {
    FactorEstimate a = to_ic(base, from);
    for (auto to : kTags) {
      FactorEstimate b = to_ic(a, to);
      CHECK(all_passed(check_identification(b.params, to)));
      // the normalized form does not depend on the route taken
      FactorEstimate direct = to_ic(base, to);
      CHECK(rel_diff(b.params.loadings, direct.params.loadings) < 1e-8);
      CHECK(rel_diff(b.params.factor_cov, direct.params.factor_cov) < 1e-8);
    }
  }
}

TEST_CASE("explicit IC restrictions") {
  FactorEstimate base = fitted(41, 15, 3);
  const Eigen::Index r = 3;
  const Matrix eye = Matrix::Identity(r, r);

  FactorEstimate e1 = to_ic1(base);
  CHECK(rel_diff(Matrix(e1.params.loadings.topRows(r)), eye) < 1e-12);

  FactorEstimate e2 = to_ic2(base);
  const double n = 15.0;
  Matrix q2 = e2.params.loadings.transpose() * e2.params.idio_var.cwiseInverse().asDiagonal() *
              e2.params.loadings / n;
  CHECK(rel_diff(q2, eye) < 1e-10);
  CHECK(e2.params.factor_cov(0, 0) > e2.params.factor_cov(1, 1));
  CHECK(e2.params.factor_cov(1, 1) > e2.params.factor_cov(2, 2));

  FactorEstimate e3 = to_ic3(base);
  CHECK(rel_diff(e3.params.factor_cov, eye) < 1e-12);

  FactorEstimate e4 = to_ic4(base);
  Matrix top4 = e4.params.loadings.topRows(r);
  CHECK(top4.diagonal().isOnes(1e-12));
  CHECK(std::abs(top4(0, 1)) + std::abs(top4(0, 2)) + std::abs(top4(1, 2)) < 1e-12);
  CHECK(e4.params.factor_cov.isDiagonal(1e-12));

  FactorEstimate e5 = to_ic5(base);
  Matrix top5 = e5.params.loadings.topRows(r);
  CHECK(std::abs(top5(0, 1)) + std::abs(top5(0, 2)) + std::abs(top5(1, 2)) < 1e-12);
  CHECK((top5.diagonal().array() > 0.0).all());
  CHECK(rel_diff(e5.params.factor_cov, eye) < 1e-12);
}

TEST_CASE("checking against the wrong condition fails and names the constraint") {
  FactorEstimate base = fitted(51, 20, 2);
  FactorEstimate e1 = to_ic1(base);
  auto checks = check_identification(e1.params, IdentificationTag::IC2);
  CHECK_FALSE(all_passed(checks));
  bool named = false;
  for (const auto& c : checks) named = named || (!c.passed && !c.name.empty());
  CHECK(named);

  FactorEstimate e3 = to_ic3(base);
  e3.params.factor_cov(0, 0) = 1.5;
  auto bad = check_identification(e3.params, IdentificationTag::IC3);
  CHECK_FALSE(all_passed(bad));
  bool mentions_mff = false;
  for (const auto& c : bad)
    if (!c.passed) mentions_mff = mentions_mff || c.name.find("factor_cov") != std::string::npos;
  CHECK(mentions_mff);
}

TEST_CASE("IC1 refuses an unsuitable top block") {
  FactorEstimate base = fitted(61, 12, 2);
  base.params.loadings.row(1) = 2.0 * base.params.loadings.row(0);
  CHECK_THROWS_AS(to_ic1(base), FirstRowsUnsuitable);
}

TEST_CASE("tied IC3 diagonal is not identified") {
  FactorParams p;
  const Eigen::Index n = 8;
  p.loadings = Matrix::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) p.loadings(i, i % 2) = 1.0;
  p.idio_var = Vector::Ones(n);
  p.factor_cov = Matrix::Identity(2, 2);
  p.intercept = Vector::Zero(n);
  FactorEstimate e;
  e.params = p;
  e.n_obs = 50;
  CHECK_FALSE(rotate_to_ic3(p).distinct);
  CHECK_THROWS_AS(to_ic2(e), NonIdentifiedOrdering);
  CHECK_THROWS_AS(to_ic3(e), NonIdentifiedOrdering);
}

TEST_CASE("rotate_to_ic3 orders the diagonal and fixes signs deterministically") {
  std::mt19937_64 g(71);
  FactorParams p = random_params(g, 30, 3, true);
  Ic3Rotation rot = rotate_to_ic3(p);
  CHECK(rot.distinct);
  CHECK(rot.diagonal(0) > rot.diagonal(1));
  CHECK(rot.diagonal(1) > rot.diagonal(2));
  // flipping any input column gives the same output
  FactorParams q = p;
  Matrix flip = Matrix::Identity(3, 3);
  flip(1, 1) = -1.0;
  q.loadings = p.loadings * flip;
  q.factor_cov = flip * p.factor_cov * flip;
  Ic3Rotation rot2 = rotate_to_ic3(q);
  CHECK(rel_diff(rot.params.loadings, rot2.params.loadings) < 1e-10);
}

TEST_CASE("align_to_truth matches a brute-force sign search") {
  std::mt19937_64 g(81);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index r = 1 + rep % 4;
    Matrix truth = gaussian(g, 12, r);
    Matrix est = truth * gaussian(g, r, r) + 0.1 * gaussian(g, 12, r);
    Vector s = align_to_truth(est, truth);
    double best = -INFINITY;
    for (int mask = 0; mask < (1 << r); ++mask) {
      double score = 0.0;
      for (Eigen::Index k = 0; k < r; ++k)
        score += ((mask >> k) & 1 ? -1.0 : 1.0) * est.col(k).dot(truth.col(k));
      best = std::max(best, score);
    }
    double got = 0.0;
    for (Eigen::Index k = 0; k < r; ++k) {
      CHECK(std::abs(s(k)) == 1.0);
      got += s(k) * est.col(k).dot(truth.col(k));
    }
    CHECK(got == doctest::Approx(best));
  }
}
