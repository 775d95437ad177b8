#include "pfgmm/study.hpp"

#include "pfgmm/error.hpp"
#include "pfgmm/second_stage.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace pfgmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

FitOptions fit_options(const StudyConfig& cfg) {
  FitOptions fo;
  fo.unpenalized = cfg.unpenalized;
  return fo;
}

PfgmmOptions pfgmm_options(const StudyConfig& cfg) {
  PfgmmOptions po;
  po.unpenalized = cfg.unpenalized;
  po.init = cfg.init;
  po.instruments = cfg.instruments;
  return po;
}

// Attaches residual-ML eta and the matching log-likelihood so bic() can score the fit.
void attach_residual_eta(const GroupedDataset& ds, FitResult& fit, const CovStructure& cov) {
  const VarianceEstimate eta = fit_residual_eta(ds, fit.beta_hat, cov);
  fit.eta_hat = EtaHat{eta.theta, eta.sigma2};
  fit.loglik = log_likelihood(ds, ModelParams{fit.beta_hat, eta.theta, eta.sigma2, cov});
}

std::vector<double> descending(std::vector<double> grid) {
  std::sort(grid.begin(), grid.end(), std::greater<>());
  return grid;
}

Estimate estimate_mple(const StudyConfig& cfg, const GroupedDataset& ds) {
  const FitOptions fo = fit_options(cfg);
  FitResult fit;
  switch (cfg.lambda.kind) {
    case LambdaPolicy::Kind::Fixed:
      fit = fit_mple(ds, cfg.penalty.with_lambda(cfg.lambda.value), fo);
      break;
    case LambdaPolicy::Kind::Bic:
      fit = select_mple_bic(ds, cfg.penalty, cfg.lambda.grid, fo, ds.n() - 1).fit;
      break;
    case LambdaPolicy::Kind::ExBic:
      throw ConfigError("ExBIC applies to PFGMM only");
  }
  Estimate est{fit, fit.beta_hat, fit.eta_hat->theta, fit.eta_hat->sigma2, fit.lambda, {}};
  return est;
}

Estimate estimate_pls(const StudyConfig& cfg, const GroupedDataset& ds) {
  const FitOptions fo = fit_options(cfg);
  const CovStructure cov = fo.cov_for(ds);
  const ProxyTransform tr = build_proxy_Vz(ds, cfg.proxy);
  const GroupedDataset transformed = tr.transform(ds);
  FitResult fit;
  switch (cfg.lambda.kind) {
    case LambdaPolicy::Kind::Fixed:
      fit = fit_pls_transformed(transformed, cfg.penalty.with_lambda(cfg.lambda.value), fo);
      attach_residual_eta(ds, fit, cov);
      break;
    case LambdaPolicy::Kind::Bic: {
      double best = std::numeric_limits<double>::infinity();
      for (double lam : descending(cfg.lambda.grid)) {
        FitResult f = fit_pls_transformed(transformed, cfg.penalty.with_lambda(lam), fo);
        if (f.active_set.size() >= ds.n()) continue;
        attach_residual_eta(ds, f, cov);
        const double b = bic(ds, f);
        if (b < best) {
          best = b;
          fit = std::move(f);
        }
      }
      if (!fit.eta_hat) throw Error("no lambda on the grid gave a usable PLS fit");
      break;
    }
    case LambdaPolicy::Kind::ExBic:
      throw ConfigError("ExBIC applies to PFGMM only");
  }
  Estimate est{fit, fit.beta_hat, fit.eta_hat->theta, fit.eta_hat->sigma2, fit.lambda, {}};
  return est;
}

Estimate estimate_pfgmm(const StudyConfig& cfg, const GroupedDataset& ds) {
  const PfgmmOptions po = pfgmm_options(cfg);
  const CovStructure cov = CovStructure::diagonal(ds.q());
  const PfgmmSetup setup = prepare_pfgmm(ds, cfg.proxy, po);
  FitResult fit;
  switch (cfg.lambda.kind) {
    case LambdaPolicy::Kind::Fixed: {
      const PenaltySpec pen = cfg.penalty.with_lambda(cfg.lambda.value);
      fit = fit_pfgmm_problem(setup.problem, pen, pfgmm_start(setup, pen, po), po);
      break;
    }
    case LambdaPolicy::Kind::ExBic:
      fit = select_pfgmm_exbic(setup.problem, setup.transformed, cfg.penalty, cfg.lambda.grid, po)
                .fit;
      break;
    case LambdaPolicy::Kind::Bic: {
      double best = std::numeric_limits<double>::infinity();
      for (double lam : descending(cfg.lambda.grid)) {
        const PenaltySpec pen = cfg.penalty.with_lambda(lam);
        FitResult f = fit_pfgmm_problem(setup.problem, pen, pfgmm_start(setup, pen, po), po);
        if (f.active_set.size() >= ds.n()) continue;
        attach_residual_eta(ds, f, cov);
        const double b = bic(ds, f);
        if (b < best) {
          best = b;
          fit = std::move(f);
        }
      }
      if (fit.beta_hat.size() == 0) throw Error("no lambda on the grid gave a usable PFGMM fit");
      break;
    }
  }

  Estimate est;
  est.fit = fit;
  est.lambda = fit.lambda;
  if (cfg.estimator == Estimator::Pfgmm) {
    const VarianceEstimate eta = fit_residual_eta(ds, fit.beta_hat, cov);
    est.beta = fit.beta_hat;
    est.theta = eta.theta;
    est.sigma2 = eta.sigma2;
  } else {
    const ReducedModel reduced = make_reduced(ds, fit.active_set);
    const SecondStageFit second = cfg.estimator == Estimator::Pfgmm2Mle
                                      ? fit_2mle(reduced, cov)
                                      : fit_2reml(reduced, cov);
    est.beta = second.beta_full(reduced);
    est.theta = second.theta;
    est.sigma2 = second.sigma2;
  }

  if (cfg.standard_errors && !fit.active_set.empty()) {
    const AsymptoticDiag diag =
        asymptotic_diag(ds, setup.problem, setup.proxy, fit, est.theta, est.sigma2, cov);
    est.se = Vec::Constant(ds.p(), kNaN);
    for (std::size_t k = 0; k < diag.active.size(); ++k) {
      est.se(diag.active[k]) = diag.se(static_cast<Eigen::Index>(k));
    }
  }
  return est;
}

double sample_mean(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

}  // namespace

Estimate estimate(const StudyConfig& cfg, const GroupedDataset& ds) {
  switch (cfg.estimator) {
    case Estimator::Mple: return estimate_mple(cfg, ds);
    case Estimator::Pls: return estimate_pls(cfg, ds);
    case Estimator::Pfgmm:
    case Estimator::Pfgmm2Mle:
    case Estimator::Pfgmm2Reml: break;
  }
  return estimate_pfgmm(cfg, ds);
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Mple: return "mple";
    case Estimator::Pls: return "pls";
    case Estimator::Pfgmm: return "pfgmm";
    case Estimator::Pfgmm2Mle: return "2mle";
    case Estimator::Pfgmm2Reml: return "2reml";
  }
  return "?";
}

Estimator parse_estimator(std::string_view text) {
  if (text == "mple") return Estimator::Mple;
  if (text == "pls") return Estimator::Pls;
  if (text == "pfgmm") return Estimator::Pfgmm;
  if (text == "2mle" || text == "pfgmm+2mle") return Estimator::Pfgmm2Mle;
  if (text == "2reml" || text == "pfgmm+2reml") return Estimator::Pfgmm2Reml;
  throw ConfigError("unknown estimator '" + std::string(text) + "'");
}

std::vector<double> default_mple_grid() {
  std::vector<double> grid = log_grid(0.05, 5.0, 30);
  std::reverse(grid.begin(), grid.end());
  return grid;
}

StudyConfig StudyConfig::defaults(Estimator e, SimConfig sim) {
  StudyConfig cfg;
  cfg.sim = std::move(sim);
  cfg.estimator = e;
  if (e == Estimator::Mple) cfg.lambda = LambdaPolicy::bic(default_mple_grid());
  return cfg;
}

void StudyConfig::validate() const {
  sim.validate();
  penalty.validate();
  lambda.validate();
  if (report_coefs < 0 || report_coefs > sim.p) throw ConfigError("report_coefs out of range");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (int j : unpenalized) {
    if (j < 0 || j >= sim.p) throw ConfigError("unpenalized column out of range");
  }
  if (lambda.kind == LambdaPolicy::Kind::ExBic && estimator == Estimator::Mple) {
    throw ConfigError("ExBIC applies to PFGMM only");
  }
  if (lambda.kind == LambdaPolicy::Kind::ExBic && estimator == Estimator::Pls) {
    throw ConfigError("ExBIC applies to PFGMM only");
  }
}

RepSummary metrics(const GroupedDataset& ds, const Vec& beta_hat, const SimTruth& truth,
                   const Vec& theta, double sigma2, int report_coefs) {
  RepSummary out;
  const ActiveSet active = ActiveSet::from_beta(beta_hat);
  out.active_size = active.size();
  out.true_positives = active.intersection_size(truth.support);
  out.coefs = beta_hat.head(report_coefs);
  out.se = Vec::Constant(report_coefs, kNaN);
  const Eigen::Index tail = beta_hat.size() - report_coefs;
  out.beta_N = tail > 0 ? beta_hat.tail(tail).mean() : 0.0;
  out.theta = theta;
  out.sigma2 = sigma2;
  out.pe = prediction_error(ds, ModelParams{beta_hat, theta, sigma2, truth.params.cov});
  out.ok = true;
  return out;
}

Moments moments(const std::vector<double>& values, double target) {
  Moments m;
  if (values.empty()) {
    m.mean = m.sd = m.mse = kNaN;
    return m;
  }
  m.mean = sample_mean(values);
  double ss = 0.0;
  double se = 0.0;
  for (double x : values) {
    ss += (x - m.mean) * (x - m.mean);
    se += (x - target) * (x - target);
  }
  m.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  m.mse = std::isnan(target) ? kNaN : se / static_cast<double>(values.size());
  return m;
}

Aggregate aggregate(const std::vector<RepSummary>& reps, const SimConfig& sim) {
  Aggregate agg;
  std::vector<const RepSummary*> ok;
  for (const auto& r : reps) {
    if (r.ok) {
      ok.push_back(&r);
    } else {
      ++agg.reps_failed;
    }
  }
  agg.reps_ok = static_cast<int>(ok.size());
  auto collect = [&](auto field) {
    std::vector<double> v;
    for (const RepSummary* r : ok) v.push_back(field(*r));
    return v;
  };
  agg.active_size = moments(collect([](const RepSummary& r) { return double(r.active_size); }), kNaN);
  agg.true_positives =
      moments(collect([](const RepSummary& r) { return double(r.true_positives); }), sim.s());
  agg.pe = moments(collect([](const RepSummary& r) { return r.pe; }), kNaN);
  agg.beta_N = moments(collect([](const RepSummary& r) { return r.beta_N; }), 0.0);
  agg.sigma2 = moments(collect([](const RepSummary& r) { return r.sigma2; }), sim.sigma2_0);

  const int k = ok.empty() ? 0 : static_cast<int>(ok.front()->coefs.size());
  for (int j = 0; j < k; ++j) {
    agg.coefs.push_back(
        moments(collect([j](const RepSummary& r) { return r.coefs(j); }), sim.beta0(j)));
    int covered = 0;
    int with_se = 0;
    for (const RepSummary* r : ok) {
      const double se = r->se(j);
      if (std::isnan(se)) continue;
      ++with_se;
      if (std::abs(r->coefs(j) - sim.beta0(j)) <= 1.959963984540054 * se) ++covered;
    }
    agg.coverage.push_back(with_se > 0 ? static_cast<double>(covered) / with_se : kNaN);
  }
  for (int t = 0; t < sim.q; ++t) {
    agg.theta.push_back(
        moments(collect([t](const RepSummary& r) { return r.theta(t); }), sim.theta0(t)));
  }
  return agg;
}

RepSummary run_rep(const StudyConfig& cfg, int rep) {
  RepSummary out;
  try {
    const SimDraw draw = generate(cfg.sim, rep);
    const Estimate est = estimate(cfg, draw.data);
    out = metrics(draw.data, est.beta, draw.truth, est.theta, est.sigma2, cfg.report_coefs);
    out.lambda = est.lambda;
    if (est.se.size() > 0) out.se = est.se.head(cfg.report_coefs);
  } catch (const std::exception& e) {
    out = RepSummary{};
    out.ok = false;
    out.error = e.what();
  }
  out.rep = rep;
  return out;
}

StudyResult run_study(const StudyConfig& cfg) {
  cfg.validate();
  StudyResult result;
  result.config = cfg;
  result.reps.resize(static_cast<std::size_t>(cfg.sim.reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < cfg.sim.reps; r = next++) {
      result.reps[static_cast<std::size_t>(r)] = run_rep(cfg, r);
    }
  };
  const int workers = std::min(cfg.threads, cfg.sim.reps);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  result.summary = aggregate(result.reps, cfg.sim);
  return result;
}

}  // namespace pfgmm
