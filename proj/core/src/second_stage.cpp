#include "pfgmm/second_stage.hpp"

#include "pfgmm/error.hpp"

#include <string>

namespace pfgmm {

namespace {

VarianceEstimate to_estimate(const VcResult& r) {
  return {r.theta, r.sigma2, r.loglik, r.grad_norm, r.converged};
}

SecondStageFit second_stage(const ReducedModel& reduced, const CovStructure& cov, VcMode mode) {
  const VcResult r = fit_variance_components(reduced.data, cov, mode);
  SecondStageFit out;
  out.beta_S = r.beta;
  out.theta = r.theta;
  out.sigma2 = r.sigma2;
  out.loglik = r.loglik;
  out.converged = r.converged;
  return out;
}

}  // namespace

VarianceEstimate fit_residual_eta(const GroupedDataset& ds, const Vec& beta,
                                  const CovStructure& cov) {
  if (beta.size() != ds.p()) throw DimensionError("beta has wrong length");
  const GroupedDataset resid =
      GroupedDataset(ds.y() - ds.X() * beta, Mat(ds.n(), 0), ds.Z(), ds.group_sizes(),
                     ds.group_labels());
  return to_estimate(fit_variance_components(resid, cov, VcMode::Residual));
}

VarianceEstimate fit_pfgmme_eta(const GroupedDataset& ds, const Vec& beta_hat_S,
                                const ActiveSet& S, const CovStructure& cov) {
  if (beta_hat_S.size() != S.size()) throw DimensionError("beta_hat_S does not match S");
  Vec beta = Vec::Zero(ds.p());
  for (int k = 0; k < S.size(); ++k) {
    const int j = S.indices()[static_cast<std::size_t>(k)];
    if (j >= ds.p()) throw DimensionError("active index out of range");
    beta(j) = beta_hat_S(k);
  }
  return fit_residual_eta(ds, beta, cov);
}

ReducedModel make_reduced(const GroupedDataset& ds, const ActiveSet& S) {
  if (S.size() >= ds.n()) {
    throw RankDeficiency("reduced model has " + std::to_string(S.size()) +
                         " columns for n = " + std::to_string(ds.n()));
  }
  ReducedModel out{ds.with_columns(S.indices()), S.indices(), ds.p()};
  if (S.size() > 0) {
    Eigen::ColPivHouseholderQR<Mat> qr(out.data.X());
    qr.setThreshold(1e-10);
    if (qr.rank() < S.size()) throw RankDeficiency("X_S is not of full column rank");
  }
  return out;
}

Vec SecondStageFit::beta_full(const ReducedModel& reduced) const {
  Vec out = Vec::Zero(reduced.full_p);
  for (std::size_t k = 0; k < reduced.columns.size(); ++k) {
    out(reduced.columns[k]) = beta_S(static_cast<Eigen::Index>(k));
  }
  return out;
}

SecondStageFit fit_2mle(const ReducedModel& reduced, const CovStructure& cov) {
  return second_stage(reduced, cov, VcMode::ML);
}

SecondStageFit fit_2reml(const ReducedModel& reduced, const CovStructure& cov) {
  return second_stage(reduced, cov, VcMode::REML);
}

std::vector<Vec> blup(const GroupedDataset& ds, const ModelParams& params) {
  params.validate(ds.p());
  const Mat psi = params.cov.psi(params.theta);
  const BlockDiag sigma = marginal_covariance(ds, params.theta, params.sigma2, params.cov);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(ds.num_groups()));
  for (int g = 0; g < ds.num_groups(); ++g) {
    Eigen::LLT<Mat> llt(sigma.block(g));
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("marginal covariance not positive definite", g);
    }
    const Vec r = ds.y_group(g) - ds.X_group(g) * params.beta;
    out.push_back(psi * ds.Z_group(g).transpose() * llt.solve(r));
  }
  return out;
}

double prediction_error(const GroupedDataset& ds, const ModelParams& params) {
  const std::vector<Vec> b = blup(ds, params);
  double total = 0.0;
  for (int g = 0; g < ds.num_groups(); ++g) {
    const Vec r = ds.y_group(g) - ds.X_group(g) * params.beta -
                  ds.Z_group(g) * b[static_cast<std::size_t>(g)];
    total += r.squaredNorm();
  }
  return total / ds.n();
}

}  // namespace pfgmm
