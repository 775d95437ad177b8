#include "pfgmm/select.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <cmath>

namespace pfgmm {

void LambdaPolicy::validate() const {
  if (kind == Kind::Fixed) {
    if (!(value > 0.0)) throw ConfigError("fixed lambda must be positive");
    return;
  }
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0)) throw ConfigError("lambda grid values must be positive");
    if (k > 0 && !(grid[k] > grid[k - 1])) {
      throw ConfigError("lambda grid must be strictly increasing");
    }
  }
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw InvalidParameter("bad lambda grid");
  std::vector<double> out;
  if (count == 1) return {hi};
  for (int k = 0; k < count; ++k) {
    const double f = static_cast<double>(k) / (count - 1);
    out.push_back(std::exp(std::log(hi) + f * (std::log(lo) - std::log(hi))));
  }
  return out;
}

double bic(const GroupedDataset& ds, const FitResult& fit, int dim_lambda) {
  if (!fit.eta_hat) throw InvalidParameter("bic needs estimated variance parameters");
  double ll = 0.0;
  if (fit.loglik) {
    ll = *fit.loglik;
  } else {
    ModelParams params{fit.beta_hat, fit.eta_hat->theta, fit.eta_hat->sigma2,
                       CovStructure::diagonal(ds.q())};
    if (params.theta.size() == 1 && ds.q() > 1) params.cov = CovStructure::isotropic(ds.q());
    ll = log_likelihood(ds, params);
  }
  return -2.0 * ll + (fit.active_set.size() + dim_lambda) * std::log(static_cast<double>(ds.n()));
}

double exbic(const PfgmmProblem& prob, const FitResult& fit) {
  return -2.0 * prob.loss(fit.beta_hat) +
         fit.active_set.size() * std::log(static_cast<double>(prob.n()));
}

std::size_t argmin(const std::vector<double>& values) {
  if (values.empty()) throw InvalidParameter("argmin of an empty list");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] < values[best]) best = k;
  }
  return best;
}

MpleSelection select_mple_bic(const GroupedDataset& ds, const PenaltySpec& pen,
                              const std::vector<double>& grid, const FitOptions& opts,
                              int max_support, int dim_lambda) {
  // The likelihood surface has several local solutions per lambda (a sparse one with
  // inflated sigma^2 and a denser one); BIC chooses among all of them.
  std::vector<FitResult> path;
  fit_mple_path(ds, pen, grid, opts, max_support, &path);
  if (path.empty()) throw Error("no lambda on the grid gave a usable MPLE fit");
  MpleSelection out;
  for (const auto& fit : path) {
    out.lambdas.push_back(fit.lambda);
    out.criteria.push_back(bic(ds, fit, dim_lambda));
  }
  out.fit = std::move(path[argmin(out.criteria)]);
  return out;
}

PfgmmSelection select_pfgmm_exbic(const PfgmmProblem& prob, const GroupedDataset& transformed,
                                  const PenaltySpec& pen, const std::vector<double>& grid,
                                  const PfgmmOptions& opts) {
  if (grid.empty()) throw InvalidParameter("lambda grid is empty");
  PfgmmSelection out;
  std::vector<FitResult> fits;
  for (double lam : grid) {
    const PenaltySpec spec = pen.with_lambda(lam);
    Vec start = Vec::Zero(prob.p());
    if (opts.init == PfgmmOptions::Init::Pls) {
      FitOptions pls_opts;
      pls_opts.unpenalized = opts.unpenalized;
      start = fit_pls_transformed(transformed, spec, pls_opts).beta_hat;
    }
    fits.push_back(fit_pfgmm_problem(prob, spec, std::move(start), opts));
    out.lambdas.push_back(lam);
    out.criteria.push_back(exbic(prob, fits.back()));
  }
  out.fit = std::move(fits[argmin(out.criteria)]);
  return out;
}

}  // namespace pfgmm
