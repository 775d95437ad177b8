#pragma once

#include "pfgmm/lmm.hpp"

#include <optional>

namespace pfgmm {

// Which likelihood the variance parameters maximise.
//   Residual: y is already a residual vector, no fixed effects.
//   ML:       fixed effects profiled out by GLS.
//   REML:     restricted likelihood, l - 1/2 log|X' Sigma^-1 X|.
enum class VcMode { Residual, ML, REML };

struct VcStart {
  Vec theta;
  double sigma2 = 1.0;
};

struct VcResult {
  Vec theta;
  double sigma2 = 0.0;
  Vec beta;  // GLS fixed effects at the optimum (empty in Residual mode)
  double loglik = 0.0;
  double grad_norm = 0.0;  // of -loglik/n w.r.t. the log-variance parameters
  int iterations = 0;
  bool converged = false;
};

// Lower bound added to every variance during optimisation.
inline constexpr double kVarianceFloor = 1e-10;

VcResult fit_variance_components(const GroupedDataset& ds, const CovStructure& cov, VcMode mode,
                                 const std::optional<VcStart>& start = std::nullopt);

// GLS fixed effects (X' Sigma^-1 X)^-1 X' Sigma^-1 y at fixed variance parameters.
Vec gls_beta(const GroupedDataset& ds, const Vec& theta, double sigma2, const CovStructure& cov);

}  // namespace pfgmm
