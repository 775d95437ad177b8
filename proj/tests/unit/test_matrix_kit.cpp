#include "oracles.hpp"

#include "pfgmm/error.hpp"
#include "pfgmm/matrix_kit.hpp"

#include <doctest.h>

#include <random>

using namespace pfgmm;

namespace {

double rel_frob(const Mat& a, const Mat& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("square roots of simple matrices") {
  CHECK(sqrtm_spd(SpdBlock(Mat::Identity(3, 3))).matrix().isApprox(Mat::Identity(3, 3)));
  Mat D = Mat::Zero(2, 2);
  D.diagonal() << 4.0, 9.0;
  const Mat S = sqrtm_spd(SpdBlock(D)).matrix();
  CHECK(S(0, 0) == doctest::Approx(2.0));
  CHECK(S(1, 1) == doctest::Approx(3.0));
  CHECK(std::abs(S(0, 1)) < 1e-14);
  CHECK(inv_sqrtm_spd(SpdBlock(Mat::Constant(1, 1, 4.0))).matrix()(0, 0) == doctest::Approx(0.5));
  CHECK(inv_sqrtm_spd(SpdBlock(Mat::Identity(4, 4))).matrix().isApprox(Mat::Identity(4, 4)));
}

TEST_CASE("random SPD roots reconstruct the input") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat A = oracle::random_spd(8, rng);
    const Mat S = sqrtm_spd(SpdBlock(A)).matrix();
    CHECK(rel_frob(S * S, A) < 1e-10);
    CHECK((S - S.transpose()).norm() < 1e-12);
    CHECK(oracle::jacobi_eigenvalues(S).front() > 0.0);
    CHECK(rel_frob(S, oracle::denman_beavers_sqrt(A)) < 1e-9);

    const Mat R = inv_sqrtm_spd(SpdBlock(A)).matrix();
    CHECK((R * A * R - Mat::Identity(8, 8)).norm() < 1e-9);
  }
}

TEST_CASE("fourth power and inverse consistency") {
  std::mt19937_64 rng(12);
  for (int d : {1, 2, 5, 12, 20}) {
    const Mat A = oracle::random_spd(d, rng);
    const Mat S = sqrtm_spd(SpdBlock(A)).matrix();
    const Mat S4 = S * S * S * S;
    CHECK(rel_frob(S4, A * A) < 1e-8);
    const Mat R = inv_sqrtm_spd(SpdBlock(A)).matrix();
    CHECK(rel_frob(R, S.inverse()) < 1e-9);
  }
}

TEST_CASE("blocks larger than the blocking threshold") {
  std::mt19937_64 rng(13);
  const Mat A = oracle::random_spd(kSqrtmBlockSize + 30, rng);
  const Mat S = sqrtm_spd(SpdBlock(A)).matrix();
  CHECK(rel_frob(S * S, A) < 1e-10);
}

TEST_CASE("SpdBlock validation") {
  Mat asym = Mat::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(SpdBlock{asym}, ConditioningError);
  Mat indefinite = Mat::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  try {
    SpdBlock{indefinite};
    FAIL("expected a conditioning error");
  } catch (const ConditioningError& e) {
    CHECK(e.min_eigenvalue() == doctest::Approx(-1.0));
  }
}

TEST_CASE("eigenvalue extrema") {
  Mat D = Mat::Zero(3, 3);
  D.diagonal() << 1.0, 2.0, 3.0;
  CHECK(eig_extrema(D).min == doctest::Approx(1.0));
  CHECK(eig_extrema(D).max == doctest::Approx(3.0));
  CHECK(eig_extrema(Mat::Identity(5, 5)).min == doctest::Approx(1.0));
  CHECK(eig_extrema(Mat::Identity(5, 5)).max == doctest::Approx(1.0));

  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const Mat A = oracle::random_symmetric(10, rng);
    const auto ev = oracle::jacobi_eigenvalues(A);
    const EigExtrema e = eig_extrema(A);
    CHECK(e.min == doctest::Approx(ev.front()).epsilon(1e-9));
    CHECK(e.max == doctest::Approx(ev.back()).epsilon(1e-9));
  }
  Mat asym = Mat::Identity(3, 3);
  asym(2, 0) = 1.0;
  CHECK_THROWS(eig_extrema(asym));
}
