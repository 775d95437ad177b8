#include "fixtures.hpp"
#include "oracles.hpp"

#include "pfgmm/baselines.hpp"
#include "pfgmm/error.hpp"
#include "pfgmm/pfgmm.hpp"
#include "pfgmm/second_stage.hpp"
#include "pfgmm/sim.hpp"
#include "pfgmm/variance_components.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

using namespace pfgmm;

namespace {

// Residual-model log-likelihood with (theta_1, theta_2, sigma2) on the log scale.
double residual_loglik(const GroupedDataset& resid, const Vec& log_eta) {
  const Vec beta = Vec::Zero(resid.p());
  const Mat psi = log_eta.head(resid.q()).array().exp().matrix().asDiagonal();
  return oracle::dense_loglik(resid, beta, psi, std::exp(log_eta(resid.q())));
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("residual variance components against a dense grid search") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 3; ++trial) {
    GroupedDataset ds = oracle::random_dataset({2, 2, 2}, 3, 2, rng);
    Vec y(ds.n());
    for (int g = 0; g < 3; ++g) {
      const double b0 = 1.2 * N(rng);
      const double b1 = 0.9 * N(rng);
      for (int r = ds.offset(g); r < ds.offset(g) + 2; ++r) {
        y(r) = 0.5 * ds.X()(r, 2) + b0 + b1 * ds.X()(r, 1) + 0.4 * N(rng);
      }
    }
    ds = ds.with_response(y);
    Vec beta = Vec::Zero(3);
    beta(2) = 0.5;
    const VarianceEstimate est =
        fit_pfgmme_eta(ds, Vec::Constant(1, 0.5), ActiveSet({2}), CovStructure::diagonal(2));
    const GroupedDataset resid(y - ds.X() * beta, Mat(ds.n(), 0), ds.Z(), ds.group_sizes());

    // Coarse log grid over the three variances, polished by Nelder-Mead.
    Vec best(3);
    double best_value = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < 25; ++a) {
      for (int b = 0; b < 25; ++b) {
        for (int c = 0; c < 25; ++c) {
          Vec e(3);
          e << -8.0 + 0.45 * a, -8.0 + 0.45 * b, -8.0 + 0.45 * c;
          const double v = residual_loglik(resid, e);
          if (v > best_value) {
            best_value = v;
            best = e;
          }
        }
      }
    }
    best = oracle::nelder_mead([&](const Vec& e) { return -residual_loglik(resid, e); }, best, 0.2, 6000);
    best_value = residual_loglik(resid, best);

    Vec at(3);
    at << std::log(std::max(est.theta(0), 1e-300)), std::log(std::max(est.theta(1), 1e-300)),
        std::log(est.sigma2);
    CHECK(est.loglik == doctest::Approx(residual_loglik(resid, at)).epsilon(1e-8));
    CHECK(est.loglik >= best_value - 1e-6);
    // Variances are compared on their own scale; near-zero components are flat.
    CHECK(std::abs(est.sigma2 - std::exp(best(2))) < 1e-2 * std::max(1.0, est.sigma2));
  }
}

TEST_CASE("degenerate random effects give the residual variance") {
  std::mt19937_64 rng(42);
  const std::vector<int> sizes(20, 5);
  GroupedDataset ds = oracle::random_dataset(sizes, 2, 1, rng);
  // Residuals with no group structure, exactly centred within every group.
  Vec r = oracle::random_matrix(ds.n(), 1, rng).col(0);
  for (int g = 0; g < ds.num_groups(); ++g) {
    auto seg = r.segment(ds.offset(g), ds.size(g));
    seg.array() -= seg.mean();
  }
  ds = ds.with_response(r);
  const VarianceEstimate est = fit_residual_eta(ds, Vec::Zero(2), CovStructure::diagonal(1));
  CHECK(est.theta(0) < 1e-6);
  CHECK(est.sigma2 == doctest::Approx(r.squaredNorm() / ds.n()).epsilon(1e-6));
  CHECK(est.grad_norm < 1e-6);
}

TEST_CASE("REML matches the balanced one-way ANOVA estimators") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> N;
  const int I = 12;
  const int m = 5;
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Vec y(I * m);
    for (int g = 0; g < I; ++g) {
      const double b = 1.0 * N(rng);
      for (int k = 0; k < m; ++k) y(g * m + k) = 2.0 + b + 0.7 * N(rng);
    }
    const Mat X = Mat::Ones(I * m, 1);
    const GroupedDataset ds(y, X, X, std::vector<int>(I, m));
    double ssw = 0.0, ssb = 0.0;
    const double grand = y.mean();
    for (int g = 0; g < I; ++g) {
      const double gm = y.segment(g * m, m).mean();
      ssb += m * (gm - grand) * (gm - grand);
      ssw += (y.segment(g * m, m).array() - gm).square().sum();
    }
    const double msw = ssw / (I * (m - 1));
    const double msb = ssb / (I - 1);
    if (msb <= msw) continue;  // ANOVA would truncate at zero
    ++checked;
    const ReducedModel red = make_reduced(ds, ActiveSet({0}));
    const SecondStageFit reml = fit_2reml(red, CovStructure::diagonal(1));
    CHECK(reml.sigma2 == doctest::Approx(msw).epsilon(1e-5));
    CHECK(reml.theta(0) == doctest::Approx((msb - msw) / m).epsilon(1e-5));
    CHECK(reml.beta_S(0) == doctest::Approx(grand).epsilon(1e-10));
    // ML divides the between-group sum of squares by I instead of I - 1.
    const SecondStageFit ml = fit_2mle(red, CovStructure::diagonal(1));
    CHECK(ml.sigma2 == doctest::Approx(msw).epsilon(1e-5));
    CHECK(ml.theta(0) == doctest::Approx((ssb / I - msw) / m).epsilon(1e-5));
  }
  CHECK(checked >= 5);
}

TEST_CASE("REML residual variance is not below ML") {
  const SimConfig cfg = fixture::example(10);
  for (int rep = 0; rep < 50; ++rep) {
    const SimDraw d = generate(cfg, rep);
    const ReducedModel red = make_reduced(d.data, ActiveSet({0, 1, 2, 3, 4}));
    const SecondStageFit ml = fit_2mle(red, CovStructure::diagonal(2));
    const SecondStageFit reml = fit_2reml(red, CovStructure::diagonal(2));
    CHECK(reml.sigma2 >= ml.sigma2 - 1e-8);
  }
}

TEST_CASE("GLS step and likelihood ordering") {
  const SimConfig cfg = fixture::example(40);
  const PfgmmOptions opts = [] {
    PfgmmOptions o;
    o.unpenalized = {0, 1};
    return o;
  }();
  for (int rep = 0; rep < 5; ++rep) {
    const SimDraw d = generate(cfg, rep);
    const FitResult fit = fit_pfgmm(d.data, PenaltySpec::scad(0.1), ProxySpec::log_n(), opts);
    const ReducedModel red = make_reduced(d.data, fit.active_set);
    const SecondStageFit ml = fit_2mle(red, CovStructure::diagonal(2));
    CHECK(ml.converged);
    // Beta is the GLS solution at the fitted variances: zero gradient of the quadratic form.
    const Mat Sigma = ml.sigma2 * oracle::dense_V(red.data, ml.theta.asDiagonal(), ml.sigma2);
    const Vec r = red.data.y() - red.data.X() * ml.beta_S;
    const Vec grad = red.data.X().transpose() * Sigma.ldlt().solve(r);
    CHECK(grad.norm() < 1e-8 * std::max(1.0, red.data.y().norm()));
    CHECK((gls_beta(red.data, ml.theta, ml.sigma2, CovStructure::diagonal(2)) - ml.beta_S).norm() < 1e-10);
    CHECK(ml.loglik == doctest::Approx(oracle::dense_loglik(red.data, ml.beta_S,
                                                            ml.theta.asDiagonal(), ml.sigma2)).epsilon(1e-9));
    // Joint ML is at least as likely as the first-stage coefficients with their best eta.
    const VarianceEstimate at_first = fit_residual_eta(d.data, fit.beta_hat, CovStructure::diagonal(2));
    CHECK(ml.loglik >= at_first.loglik - 1e-8);
    CHECK(ml.beta_full(red).size() == cfg.p);
  }
}

TEST_CASE("noiseless reduced model") {
  std::mt19937_64 rng(44);
  const std::vector<int> sizes(10, 4);
  GroupedDataset ds = oracle::random_dataset(sizes, 3, 1, rng);
  Vec beta(3);
  beta << 1.0, -2.0, 0.5;
  ds = ds.with_response(ds.X() * beta);
  const ReducedModel red = make_reduced(ds, ActiveSet({0, 1, 2}));
  const SecondStageFit ml = fit_2mle(red, CovStructure::diagonal(1));
  CHECK((ml.beta_S - beta).norm() < 1e-6);
  CHECK(ml.sigma2 < 1e-6);
}

TEST_CASE("reduced model validation") {
  std::mt19937_64 rng(45);
  GroupedDataset ds = oracle::random_dataset({3, 3}, 4, 1, rng);
  CHECK_THROWS_AS(make_reduced(ds, ActiveSet({0, 1, 2, 3, 4, 5})), RankDeficiency);
  Mat X = ds.X();
  X.col(3) = 2.0 * X.col(2);
  const GroupedDataset dup(ds.y(), X, ds.Z(), ds.group_sizes());
  CHECK_THROWS_AS(make_reduced(dup, ActiveSet({2, 3})), RankDeficiency);
  const ReducedModel red = make_reduced(ds, ActiveSet({1, 3}));
  CHECK(red.columns == std::vector<int>{1, 3});
  CHECK(red.data.X().col(1) == ds.X().col(3));
}

TEST_CASE("BLUP") {
  SUBCASE("scalar hand formula") {
    Mat X(1, 1), Z(1, 1);
    X << 1.5;
    Z << 2.0;
    Vec y(1);
    y << 4.0;
    const GroupedDataset ds(y, X, Z, {1});
    ModelParams p;
    p.beta = Vec::Constant(1, 0.8);
    p.theta = Vec::Constant(1, 0.6);
    p.sigma2 = 0.3;
    p.cov = CovStructure::diagonal(1);
    const std::vector<Vec> b = blup(ds, p);
    const double expect = 0.6 * 2.0 * (4.0 - 1.5 * 0.8) / (0.3 + 0.6 * 4.0);
    CHECK(b[0](0) == doctest::Approx(expect));
  }
  SUBCASE("vanishes without random effects") {
    std::mt19937_64 rng(46);
    const GroupedDataset ds = oracle::random_dataset({3, 4}, 3, 2, rng);
    ModelParams p{Vec::Zero(3), Vec::Zero(2), 0.5, CovStructure::diagonal(2)};
    for (const Vec& b : blup(ds, p)) CHECK(b.isZero());
    const double pe = prediction_error(ds, p);
    CHECK(pe == doctest::Approx(ds.y().squaredNorm() / ds.n()));
  }
  SUBCASE("dense conditional mean and orthogonality") {
    std::mt19937_64 rng(47);
    const GroupedDataset ds = oracle::random_dataset({3, 5, 4}, 3, 2, rng);
    ModelParams p{Vec::Constant(3, 0.2), Vec::Zero(2), 0.4, CovStructure::diagonal(2)};
    p.theta << 0.7, 0.3;
    const std::vector<Vec> b = blup(ds, p);
    const Mat Zd = ds.dense_Z();
    Mat Psi = Mat::Zero(6, 6);
    for (int g = 0; g < 3; ++g) Psi.block(2 * g, 2 * g, 2, 2) = p.theta.asDiagonal();
    const Mat Sigma = Zd * Psi * Zd.transpose() + 0.4 * Mat::Identity(ds.n(), ds.n());
    const Vec r = ds.y() - ds.X() * p.beta;
    const Vec ref = Psi * Zd.transpose() * Sigma.ldlt().solve(r);
    Vec got(6);
    for (int g = 0; g < 3; ++g) got.segment(2 * g, 2) = b[static_cast<std::size_t>(g)];
    CHECK((got - ref).norm() < 1e-10);
    // The BLUP solves Henderson's equations: Z'(r - Z b)/sigma2 = Psi^-1 b.
    const Vec e = r - Zd * got;
    CHECK((Zd.transpose() * e / 0.4 - Psi.inverse() * got).norm() < 1e-9);
  }
}

TEST_CASE("prediction error") {
  std::mt19937_64 rng(48);
  GroupedDataset ds = oracle::random_dataset({4, 4, 4}, 3, 1, rng);
  const Vec beta = Vec::Constant(3, 0.3);
  ds = ds.with_response(ds.X() * beta);
  ModelParams p{beta, Vec::Constant(1, 0.5), 0.2, CovStructure::diagonal(1)};
  CHECK(prediction_error(ds, p) < 1e-28);
  const GroupedDataset other = oracle::random_dataset({4, 4, 4}, 2, 1, rng);
  CHECK_THROWS(prediction_error(other, p));
}

TEST_CASE("second-stage estimators recover the variance components") {
  const SimConfig cfg = fixture::example(100);
  PfgmmOptions opts;
  opts.unpenalized = {0, 1};
  const int reps = 100;
  std::vector<std::vector<double>> t1(3), t2(3), s2(3);
  std::vector<double> sizes;
  for (int rep = 0; rep < reps; ++rep) {
    const SimDraw d = generate(cfg, rep);
    const FitResult fit = fit_pfgmm(d.data, PenaltySpec::scad(0.1), ProxySpec::log_n(), opts);
    const VarianceEstimate eta = fit_residual_eta(d.data, fit.beta_hat, CovStructure::diagonal(2));
    const ReducedModel red = make_reduced(d.data, fit.active_set);
    const SecondStageFit ml = fit_2mle(red, CovStructure::diagonal(2));
    const SecondStageFit reml = fit_2reml(red, CovStructure::diagonal(2));
    const Vec th[3] = {eta.theta, ml.theta, reml.theta};
    const double sg[3] = {eta.sigma2, ml.sigma2, reml.sigma2};
    for (int k = 0; k < 3; ++k) {
      t1[k].push_back(th[k](0));
      t2[k].push_back(th[k](1));
      s2[k].push_back(sg[k]);
    }
    sizes.push_back(fit.active_set.size());
  }
  // Maximum likelihood estimates sigma^2 without the degrees-of-freedom correction, so
  // its target is sigma^2 (n - |S|) / n; REML targets sigma^2 itself.
  const double n = cfg.n();
  const double ml_target = 0.25 * (n - mean(sizes)) / n;
  const std::string names[3] = {"residual", "2MLE", "2REML"};
  const double targets[3] = {ml_target, ml_target, 0.25};
  const double rt = std::sqrt(static_cast<double>(reps));
  for (int k = 0; k < 3; ++k) {
    MESSAGE(names[k] << ": theta " << mean(t1[k]) << " (" << sd(t1[k]) << "), " << mean(t2[k]) << " ("
                     << sd(t2[k]) << "), sigma2 " << mean(s2[k]) << " (" << sd(s2[k]) << ")");
    CHECK(std::abs(mean(t1[k]) - 0.56) <= 2.0 * sd(t1[k]) / rt);
    CHECK(std::abs(mean(t2[k]) - 0.56) <= 2.0 * sd(t2[k]) / rt);
    CHECK(std::abs(mean(s2[k]) - targets[k]) <= 2.0 * sd(s2[k]) / rt);
  }
}
