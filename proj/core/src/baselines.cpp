#include "pfgmm/baselines.hpp"

#include "coordinate_descent.hpp"
#include "pfgmm/error.hpp"
#include "pfgmm/variance_components.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace pfgmm {

namespace {

constexpr double kCdStepTol = 1e-9;

struct Whitened {
  Vec y;
  Mat X;
  double logdet = 0.0;
};

// L_i^{-1} y_i, L_i^{-1} X_i with L_i the Cholesky factor of Z_i Psi Z_i' + sigma^2 I.
Whitened whiten(const GroupedDataset& ds, const EtaHat& eta, const CovStructure& cov) {
  const BlockDiag sigma = marginal_covariance(ds, eta.theta, eta.sigma2, cov);
  Whitened w{Vec(ds.n()), Mat(ds.n(), ds.p()), 0.0};
  for (int g = 0; g < ds.num_groups(); ++g) {
    Eigen::LLT<Mat> llt(sigma.block(g));
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("marginal covariance not positive definite", g);
    }
    const auto L = llt.matrixL();
    w.y.segment(ds.offset(g), ds.size(g)) = L.solve(Vec(ds.y_group(g)));
    w.X.middleRows(ds.offset(g), ds.size(g)) = L.solve(Mat(ds.X_group(g)));
    w.logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
  return w;
}

double penalty_sum(const PenaltySpec& pen, const Vec& beta, const std::vector<char>& mask) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (mask[static_cast<std::size_t>(j)] && beta(j) != 0.0) total += pen_value(pen, std::abs(beta(j)));
  }
  return total;
}

EtaHat initial_eta(const GroupedDataset& ds, const std::vector<int>& unpenalized, int num_params) {
  double v = 0.0;
  if (unpenalized.empty()) {
    v = (ds.y().array() - ds.y().mean()).square().sum() / std::max(1, ds.n() - 1);
  } else {
    const GroupedDataset sub = ds.with_columns(unpenalized);
    const Vec b = sub.X().colPivHouseholderQr().solve(sub.y());
    v = (sub.y() - sub.X() * b).squaredNorm() /
        std::max(1, ds.n() - static_cast<int>(unpenalized.size()));
  }
  v = std::max(v, 1e-6);
  EtaHat eta;
  eta.sigma2 = 0.5 * v;
  eta.theta = Vec::Constant(num_params, 0.5 * v / std::max(1, ds.q()));
  return eta;
}

// P'(|beta_j|) at the current iterate, P'(0+) at zeros, 0 for unpenalised columns.
Vec lla_weights(const PenaltySpec& pen, const Vec& beta, const std::vector<char>& mask) {
  Vec w = Vec::Zero(beta.size());
  const double at_zero = pen_deriv(pen, std::numeric_limits<double>::min());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    w(j) = beta(j) == 0.0 ? at_zero : pen_deriv(pen, std::abs(beta(j)));
  }
  return w;
}

}  // namespace

FitResult fit_mple(const GroupedDataset& ds, const PenaltySpec& pen, const FitOptions& opts,
                   const FitResult* warm_start) {
  pen.validate();
  const CovStructure cov = opts.cov_for(ds);
  const std::vector<char> mask = detail::penalized_mask(ds.p(), opts.unpenalized);
  const double n = ds.n();

  Vec beta = Vec::Zero(ds.p());
  EtaHat eta;
  if (warm_start != nullptr && warm_start->eta_hat && warm_start->beta_hat.size() == ds.p()) {
    beta = warm_start->beta_hat;
    eta = *warm_start->eta_hat;
  } else {
    eta = initial_eta(ds, opts.unpenalized, cov.num_params());
    if (opts.mple_init == FitOptions::MpleInit::Pls) {
      beta = fit_pls(ds, pen, ProxySpec::log_n(), opts).beta_hat;
      const GroupedDataset resid(ds.y() - ds.X() * beta, Mat(ds.n(), 0), ds.Z(),
                                 ds.group_sizes(), ds.group_labels());
      const VcResult vc =
          fit_variance_components(resid, cov, VcMode::Residual, VcStart{eta.theta, eta.sigma2});
      eta = EtaHat{vc.theta, vc.sigma2};
    }
  }

  FitResult out;
  out.lambda = pen.lambda;
  double previous = 0.0;
  Whitened w;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    w = whiten(ds, eta, cov);
    if (opts.beta_step == FitOptions::BetaStep::Exact) {
      const detail::LsProblem prob{w.X, w.y, pen, mask};
      detail::ls_coordinate_descent(prob, beta, opts.max_iter, kCdStepTol);
    } else {
      detail::weighted_l1_coordinate_descent(w.X, w.y, lla_weights(pen, beta, mask), beta,
                                             opts.max_iter, kCdStepTol);
    }
    const double q = 0.5 * std::log(2.0 * std::numbers::pi) +
                     (w.logdet + (w.y - w.X * beta).squaredNorm()) / (2.0 * n) +
                     penalty_sum(pen, beta, mask);
    out.trace.push_back(q);
    out.iterations = iter;
    if (iter > 1 && std::abs(previous - q) <= opts.rel_tol * std::max(1.0, std::abs(q))) {
      out.converged = true;
      break;
    }
    previous = q;
    const GroupedDataset resid(ds.y() - ds.X() * beta, Mat(ds.n(), 0), ds.Z(), ds.group_sizes(),
                               ds.group_labels());
    const VcResult vc =
        fit_variance_components(resid, cov, VcMode::Residual, VcStart{eta.theta, eta.sigma2});
    eta = EtaHat{vc.theta, vc.sigma2};
  }

  const detail::LsProblem prob{w.X, w.y, pen, mask};
  if (opts.beta_step == FitOptions::BetaStep::Lla) {
    // The outer loop stops on the objective; finish the LLA fixed point at the final eta.
    for (int k = 0; k < opts.max_iter && detail::ls_kkt_residual(prob, beta, opts.zero_tol) >
                                             opts.kkt_tol;
         ++k) {
      detail::weighted_l1_coordinate_descent(w.X, w.y, lla_weights(pen, beta, mask), beta,
                                             opts.max_iter, kCdStepTol);
    }
  }
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::abs(beta(j)) <= opts.zero_tol) beta(j) = 0.0;
  }
  const double final_q = 0.5 * std::log(2.0 * std::numbers::pi) +
                         (w.logdet + (w.y - w.X * beta).squaredNorm()) / (2.0 * n) +
                         penalty_sum(pen, beta, mask);
  if (final_q < out.trace.back()) out.trace.push_back(final_q);
  out.objective = final_q;
  out.kkt_residual = detail::ls_kkt_residual(prob, beta, opts.zero_tol);
  out.loglik = -n * (out.objective - penalty_sum(pen, beta, mask));
  out.active_set = ActiveSet::from_beta(beta, opts.zero_tol);
  out.beta_hat = std::move(beta);
  out.eta_hat = eta;
  return out;
}

std::vector<FitResult> fit_mple_path(const GroupedDataset& ds, const PenaltySpec& pen,
                                     const std::vector<double>& lambdas, const FitOptions& opts,
                                     int max_support, std::vector<FitResult>* local_solutions) {
  std::vector<double> grid = lambdas;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  const CovStructure cov = opts.cov_for(ds);

  // Shared start: PLS at the reference lambda of `pen`, with residual-likelihood eta.
  // Large-lambda fits started from a sparse beta tend to settle at an inflated sigma^2,
  // so every grid point also gets a start from this moderately dense solution.
  FitResult reference = fit_pls(ds, pen, ProxySpec::log_n(), opts);
  {
    const GroupedDataset resid(ds.y() - ds.X() * reference.beta_hat, Mat(ds.n(), 0), ds.Z(),
                               ds.group_sizes(), ds.group_labels());
    const EtaHat start = initial_eta(ds, opts.unpenalized, cov.num_params());
    const VcResult vc =
        fit_variance_components(resid, cov, VcMode::Residual, VcStart{start.theta, start.sigma2});
    reference.eta_hat = EtaHat{vc.theta, vc.sigma2};
  }

  // Once the support approaches n the likelihood is unbounded (sigma^2 -> 0), so fits
  // above max_support are not candidates. The cold start is also continued from the
  // previous grid point; the reference start is not, since a warm start from a sparser
  // fit pulls it back to the sparse branch.
  std::vector<FitResult> path;
  std::optional<FitResult> cold_head;
  for (double lam : grid) {
    const PenaltySpec spec = pen.with_lambda(lam);
    FitResult cold = fit_mple(ds, spec, opts);
    if (cold_head) {
      FitResult warm = fit_mple(ds, spec, opts, &*cold_head);
      if (warm.objective < cold.objective) cold = std::move(warm);
    }
    FitResult from_reference = fit_mple(ds, spec, opts, &reference);

    const FitResult* best = nullptr;
    for (const FitResult* c : {&cold, &from_reference}) {
      if (c->active_set.size() > max_support) continue;
      if (local_solutions != nullptr) local_solutions->push_back(*c);
      if (best == nullptr || c->objective < best->objective) best = c;
    }
    if (best == nullptr) break;
    path.push_back(*best);
    if (cold.active_set.size() > max_support) {
      cold_head.reset();
    } else {
      cold_head = std::move(cold);
    }
  }
  return path;
}

FitResult fit_pls_transformed(const GroupedDataset& transformed, const PenaltySpec& pen,
                              const FitOptions& opts) {
  pen.validate();
  const std::vector<char> mask = detail::penalized_mask(transformed.p(), opts.unpenalized);
  const detail::LsProblem prob{transformed.X(), transformed.y(), pen, mask};
  Vec beta = Vec::Zero(transformed.p());
  FitResult out;
  out.lambda = pen.lambda;
  const detail::CdOutcome cd = detail::ls_coordinate_descent(prob, beta, opts.max_iter, kCdStepTol,
                                                             &out.trace);
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::abs(beta(j)) <= opts.zero_tol) beta(j) = 0.0;
  }
  out.iterations = cd.sweeps;
  out.converged = cd.converged;
  out.objective = detail::ls_objective(prob, beta);
  out.kkt_residual = detail::ls_kkt_residual(prob, beta, opts.zero_tol);
  out.active_set = ActiveSet::from_beta(beta, opts.zero_tol);
  out.beta_hat = std::move(beta);
  return out;
}

FitResult fit_pls(const GroupedDataset& ds, const PenaltySpec& pen, const ProxySpec& proxy,
                  const FitOptions& opts) {
  const ProxyTransform tr = build_proxy_Vz(ds, proxy);
  return fit_pls_transformed(tr.transform(ds), pen, opts);
}

double gradient_at_truth(const GroupedDataset& ds, const ModelParams& params0, int k) {
  if (k < 0 || k >= ds.p()) throw InvalidParameter("gradient_at_truth: column index out of range");
  params0.validate(ds.p());
  const BlockDiag sigma = marginal_covariance(ds, params0.theta, params0.sigma2, params0.cov);
  double total = 0.0;
  for (int g = 0; g < ds.num_groups(); ++g) {
    Eigen::LLT<Mat> llt(sigma.block(g));
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("marginal covariance not positive definite", g);
    }
    const Vec r = ds.y_group(g) - ds.X_group(g) * params0.beta;
    total += llt.solve(r).dot(ds.X_group(g).col(k));
  }
  return std::abs(total) / ds.n();
}

}  // namespace pfgmm
