#pragma once

#include "pfgmm/lmm.hpp"
#include "pfgmm/penalty.hpp"
#include "pfgmm/proxy.hpp"

#include <optional>
#include <vector>

namespace pfgmm {

struct FitOptions {
  double kkt_tol = 1e-6;
  int max_iter = 500;
  double zero_tol = 1e-8;
  double rel_tol = 1e-8;
  // 0-based columns left out of the penalty.
  std::vector<int> unpenalized;
  // Random-effect covariance structure; defaults to Diagonal(q).
  std::optional<CovStructure> cov;
  // MPLE beta step: local linear approximation of the penalty (weighted L1 around the
  // current iterate) or exact coordinatewise minimisation of the folded-concave penalty.
  enum class BetaStep { Lla, Exact };
  BetaStep beta_step = BetaStep::Lla;
  // MPLE starting beta: zero or the proxy least-squares fit at the same lambda.
  enum class MpleInit { Zero, Pls };
  MpleInit mple_init = MpleInit::Pls;

  CovStructure cov_for(const GroupedDataset& ds) const {
    return cov ? *cov : CovStructure::diagonal(ds.q());
  }
};

struct EtaHat {
  Vec theta;
  double sigma2 = 0.0;
};

struct FitResult {
  Vec beta_hat;
  ActiveSet active_set;
  std::optional<EtaHat> eta_hat;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
  double kkt_residual = 0.0;
  double lambda = 0.0;
  // l_n(beta_hat, eta_hat) when eta_hat is set.
  std::optional<double> loglik;
};

// Penalised likelihood: minimises -l_n / n + sum_j P(|beta_j|) over (beta, eta)
// by alternating an exact coordinate-descent beta step on Sigma^{-1/2}-whitened data
// with a residual-likelihood eta step.
FitResult fit_mple(const GroupedDataset& ds, const PenaltySpec& pen, const FitOptions& opts,
                   const FitResult* warm_start = nullptr);

// fit_mple along a decreasing lambda grid from two kinds of start: the cold start of
// `opts` (also warm-started from the previous grid point) and PLS at pen.lambda.
// Each path entry is the lowest objective among the two, ignoring fits with more than
// `max_support` coordinates; the path stops at the first lambda where both exceed it.
// `local_solutions`, if given, receives both admissible fits at every grid point.
std::vector<FitResult> fit_mple_path(const GroupedDataset& ds, const PenaltySpec& pen,
                                     const std::vector<double>& lambdas, const FitOptions& opts,
                                     int max_support,
                                     std::vector<FitResult>* local_solutions = nullptr);

// Profiled penalised least squares on (Vtilde^{-1/2} y, Vtilde^{-1/2} X); eta is not estimated.
FitResult fit_pls(const GroupedDataset& ds, const PenaltySpec& pen, const ProxySpec& proxy,
                  const FitOptions& opts);

// Same, on data already transformed by the proxy.
FitResult fit_pls_transformed(const GroupedDataset& transformed, const PenaltySpec& pen,
                              const FitOptions& opts);

// |(y - X beta0)' Sigma^-1 X_k| / n with Sigma = sigma^2 V at the true parameters.
double gradient_at_truth(const GroupedDataset& ds, const ModelParams& params0, int k);

}  // namespace pfgmm
