#include "oracles.hpp"

#include "pfgmm/error.hpp"
#include "pfgmm/lmm.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace pfgmm;

TEST_CASE("dataset layout and stacked Z") {
  std::mt19937_64 rng(1);
  const GroupedDataset ds = oracle::random_dataset({3, 1, 4}, 5, 2, rng);
  CHECK(ds.n() == 8);
  CHECK(ds.p() == 5);
  CHECK(ds.q() == 2);
  CHECK(ds.num_groups() == 3);
  CHECK(ds.offset(2) == 4);
  const Mat Zd = ds.dense_Z();
  CHECK(Zd.rows() == 8);
  CHECK(Zd.cols() == 6);
  CHECK(Zd.block(3, 2, 1, 2).isApprox(ds.Z().row(3)));
  CHECK(Zd.block(0, 2, 3, 4).isZero());
}

TEST_CASE("dataset rejects inconsistent shapes") {
  CHECK_THROWS_AS(GroupedDataset(Vec::Zero(4), Mat::Zero(4, 2), Mat::Zero(4, 1), {2, 1}),
                  DimensionError);
  CHECK_THROWS_AS(GroupedDataset(Vec::Zero(4), Mat::Zero(3, 2), Mat::Zero(4, 1), {2, 2}),
                  DimensionError);
  CHECK_THROWS(GroupedDataset(Vec::Zero(2), Mat::Zero(2, 2), Mat::Zero(2, 1), {2, 0}));
}

TEST_CASE("build_V with zero variance is the identity") {
  std::mt19937_64 rng(2);
  const GroupedDataset ds = oracle::random_dataset({2, 3}, 4, 2, rng);
  const ModelParams params{Vec::Zero(4), Vec::Zero(2), 0.7, CovStructure::diagonal(2)};
  CHECK(build_V(ds, params).dense().isApprox(Mat::Identity(5, 5)));
}

TEST_CASE("build_V random intercept block") {
  const GroupedDataset ds(Vec::Zero(3), Mat::Ones(3, 1), Mat::Ones(3, 1), {3});
  const ModelParams params{Vec::Zero(1), Vec::Constant(1, 0.56), 0.25, CovStructure::diagonal(1)};
  const Mat V = build_V(ds, params).block(0);
  const Mat expected = Mat::Identity(3, 3) + 2.24 * Mat::Ones(3, 3);
  CHECK((V - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_V matches dense assembly and has eigenvalues >= 1") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const GroupedDataset ds = oracle::random_dataset({2, 4, 3, 1}, 3, 2, rng);
    std::uniform_real_distribution<double> u(0.01, 2.0);
    const Vec theta = (Vec(2) << u(rng), u(rng)).finished();
    const double sigma2 = u(rng);
    const ModelParams params{Vec::Zero(3), theta, sigma2, CovStructure::diagonal(2)};
    const Mat V = build_V(ds, params).dense();
    const Mat Vd = oracle::dense_V(ds, theta.asDiagonal().toDenseMatrix(), sigma2);
    CHECK((V - Vd).cwiseAbs().maxCoeff() < 1e-12);
    for (int g = 0; g < ds.num_groups(); ++g) {
      CHECK(oracle::jacobi_eigenvalues(build_V(ds, params).block(g)).front() >= 1.0 - 1e-12);
    }
  }
}

TEST_CASE("isotropic structure shares one parameter") {
  const CovStructure iso = CovStructure::isotropic(3);
  CHECK(iso.num_params() == 1);
  CHECK(iso.psi(Vec::Constant(1, 0.4)).isApprox(0.4 * Mat::Identity(3, 3)));
}

TEST_CASE("build_V rejects non-finite parameters") {
  std::mt19937_64 rng(4);
  const GroupedDataset ds = oracle::random_dataset({2, 2}, 3, 1, rng);
  const ModelParams bad{Vec::Zero(3), Vec::Constant(1, NAN), 1.0, CovStructure::diagonal(1)};
  CHECK_THROWS_AS(build_V(ds, bad), InvalidParameter);
  const ModelParams neg{Vec::Zero(3), Vec::Constant(1, 0.1), -1.0, CovStructure::diagonal(1)};
  CHECK_THROWS_AS(build_V(ds, neg), InvalidParameter);
}

TEST_CASE("log-likelihood at zero variance and zero data") {
  const int n = 7;
  const GroupedDataset ds(Vec::Zero(n), Mat::Ones(n, 2), Mat::Ones(n, 1), {3, 4});
  const double sigma2 = 0.3;
  const ModelParams params{Vec::Zero(2), Vec::Zero(1), sigma2, CovStructure::diagonal(1)};
  CHECK(log_likelihood(ds, params) ==
        doctest::Approx(-0.5 * n * std::log(2.0 * std::numbers::pi * sigma2)).epsilon(1e-12));
}

TEST_CASE("log-likelihood of a single pair matches the bivariate normal density") {
  // y = (0.3, -0.4), x = 1, z = (1, 2), psi = 0.5, sigma2 = 0.2, beta = 0.1.
  Mat X(2, 1);
  X << 1.0, 1.0;
  Mat Z(2, 1);
  Z << 1.0, 2.0;
  Vec y(2);
  y << 0.3, -0.4;
  const GroupedDataset ds(y, X, Z, {2});
  const ModelParams params{Vec::Constant(1, 0.1), Vec::Constant(1, 0.5), 0.2, CovStructure::diagonal(1)};
  // Covariance written out by hand: psi z z' + sigma2 I.
  const double c11 = 0.5 * 1 + 0.2;
  const double c22 = 0.5 * 4 + 0.2;
  const double c12 = 0.5 * 2;
  const double det = c11 * c22 - c12 * c12;
  const double r1 = 0.3 - 0.1;
  const double r2 = -0.4 - 0.1;
  const double quad = (c22 * r1 * r1 - 2 * c12 * r1 * r2 + c11 * r2 * r2) / det;
  const double expected = -std::log(2 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
  CHECK(log_likelihood(ds, params) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log-likelihood equals the dense multivariate normal oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const GroupedDataset ds = oracle::random_dataset({3, 5, 2, 6, 4}, 4, 2, rng);
    const Vec beta = oracle::random_matrix(4, 1, rng).col(0);
    const Vec theta = (Vec(2) << 0.3 + trial * 0.1, 0.8).finished();
    const double sigma2 = 0.4;
    const ModelParams params{beta, theta, sigma2, CovStructure::diagonal(2)};
    const double dense = oracle::dense_loglik(ds, beta, theta.asDiagonal().toDenseMatrix(), sigma2);
    CHECK(log_likelihood(ds, params) == doctest::Approx(dense).epsilon(1e-10));
  }
}

TEST_CASE("log-likelihood is invariant to group order") {
  std::mt19937_64 rng(6);
  const GroupedDataset ds = oracle::random_dataset({3, 2, 5, 1}, 3, 2, rng);
  const ModelParams params{Vec::Constant(3, 0.2), Vec::Constant(2, 0.6), 0.3, CovStructure::diagonal(2)};
  const GroupedDataset perm = ds.permuted({2, 0, 3, 1});
  CHECK(log_likelihood(perm, params) == doctest::Approx(log_likelihood(ds, params)).epsilon(1e-12));
}

TEST_CASE("log-likelihood is strictly concave in beta") {
  std::mt19937_64 rng(7);
  const GroupedDataset ds = oracle::random_dataset({4, 4, 4}, 3, 1, rng);
  const ModelParams base{Vec::Zero(3), Vec::Constant(1, 0.5), 0.4, CovStructure::diagonal(1)};
  const double h = 1e-3;
  Mat H(3, 3);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      auto at = [&](double da, double db) {
        ModelParams m = base;
        m.beta(a) += da;
        m.beta(b) += db;
        return log_likelihood(ds, m);
      };
      H(a, b) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
    }
  }
  CHECK(oracle::jacobi_eigenvalues(0.5 * (H + H.transpose())).back() < 0.0);
}

TEST_CASE("profile quadratic") {
  std::mt19937_64 rng(8);
  const GroupedDataset base = oracle::random_dataset({3, 4}, 3, 1, rng);
  const Vec beta = oracle::random_matrix(3, 1, rng).col(0);
  std::vector<Mat> blocks{oracle::random_spd(3, rng), oracle::random_spd(4, rng)};
  const BlockDiag vinv(blocks);

  SUBCASE("zero at an exact fit") {
    const GroupedDataset exact = base.with_response(base.X() * beta);
    CHECK(profile_quadratic(exact, beta, vinv) == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("identity weight is the residual sum of squares") {
    const BlockDiag id(std::vector<Mat>{Mat::Identity(3, 3), Mat::Identity(4, 4)});
    CHECK(profile_quadratic(base, beta, id) ==
          doctest::Approx((base.y() - base.X() * beta).squaredNorm()).epsilon(1e-12));
  }
  SUBCASE("dense oracle") {
    const Vec r = base.y() - base.X() * beta;
    CHECK(profile_quadratic(base, beta, vinv) ==
          doctest::Approx(r.dot(vinv.dense() * r)).epsilon(1e-12));
  }
}

TEST_CASE("active sets and signal strength") {
  Vec beta = Vec::Zero(6);
  beta(0) = 1.0;
  beta(3) = -0.4;
  beta(5) = 1e-12;
  const ActiveSet S = ActiveSet::from_beta(beta);
  CHECK(S.indices() == std::vector<int>{0, 3});
  CHECK(S.contains(3));
  CHECK_FALSE(S.contains(5));
  CHECK(S.intersection_size(ActiveSet({0, 1, 2})) == 1);
  CHECK(signal_strength(beta, S) == doctest::Approx(0.2));
}
