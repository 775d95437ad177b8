#pragma once

#include "pfgmm/lmm.hpp"
#include "pfgmm/variance_components.hpp"

#include <vector>

namespace pfgmm {

struct VarianceEstimate {
  Vec theta;
  double sigma2 = 0.0;
  double loglik = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
};

// Residual model r = y - X_S beta_S = Z b + eps; ML for (theta, sigma2).
VarianceEstimate fit_pfgmme_eta(const GroupedDataset& ds, const Vec& beta_hat_S,
                                const ActiveSet& S, const CovStructure& cov);

// Same, with beta given as a full length-p vector.
VarianceEstimate fit_residual_eta(const GroupedDataset& ds, const Vec& beta,
                                  const CovStructure& cov);

// Dataset restricted to the selected columns, with the map back to 1..p.
struct ReducedModel {
  GroupedDataset data;
  std::vector<int> columns;  // 0-based indices into the full design
  int full_p = 0;
};

// Throws RankDeficiency if |S| >= n or X_S is not of full column rank.
ReducedModel make_reduced(const GroupedDataset& ds, const ActiveSet& S);

struct SecondStageFit {
  Vec beta_S;
  Vec theta;
  double sigma2 = 0.0;
  double loglik = 0.0;  // ML log-likelihood, or restricted log-likelihood for REML
  bool converged = false;

  // beta_S scattered into a length-p vector.
  Vec beta_full(const ReducedModel& reduced) const;
};

SecondStageFit fit_2mle(const ReducedModel& reduced, const CovStructure& cov);
SecondStageFit fit_2reml(const ReducedModel& reduced, const CovStructure& cov);

// Empirical BLUP b_i = Psi Z_i' (sigma^2 V_i)^-1 (y_i - X_i beta), one q-vector per group.
std::vector<Vec> blup(const GroupedDataset& ds, const ModelParams& params);

// n^-1 || y - X beta - Z b ||^2 with b the BLUP on the same data.
double prediction_error(const GroupedDataset& ds, const ModelParams& params);

}  // namespace pfgmm
