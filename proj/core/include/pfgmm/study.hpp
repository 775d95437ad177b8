#pragma once

#include "pfgmm/baselines.hpp"
#include "pfgmm/penalty.hpp"
#include "pfgmm/pfgmm.hpp"
#include "pfgmm/proxy.hpp"
#include "pfgmm/select.hpp"
#include "pfgmm/sim.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace pfgmm {

enum class Estimator { Mple, Pls, Pfgmm, Pfgmm2Mle, Pfgmm2Reml };

std::string to_string(Estimator e);
Estimator parse_estimator(std::string_view text);  // mple, pls, pfgmm, 2mle, 2reml

struct StudyConfig {
  SimConfig sim = SimConfig::example21();
  Estimator estimator = Estimator::Pfgmm;
  PenaltySpec penalty = PenaltySpec::scad(0.1);
  LambdaPolicy lambda = LambdaPolicy::fixed(0.1);
  ProxySpec proxy = ProxySpec::log_n();
  InstrumentSource instruments;
  PfgmmOptions::Init init = PfgmmOptions::Init::Pls;
  std::vector<int> unpenalized{0, 1};
  // Leading coefficients reported individually (beta_1..beta_k).
  int report_coefs = 5;
  // Asymptotic standard errors for the PFGMM-based estimators.
  bool standard_errors = false;
  int threads = 1;

  // MPLE: BIC over log_grid(0.05, 5, 30); everything else: fixed lambda 0.1.
  static StudyConfig defaults(Estimator e, SimConfig sim = SimConfig::example21());
  void validate() const;
};

std::vector<double> default_mple_grid();

// One estimator applied to one dataset.
struct Estimate {
  FitResult fit;  // first-stage fit (MPLE, PLS or PFGMM)
  Vec beta;       // final coefficients, after the second stage when there is one
  Vec theta;
  double sigma2 = 0.0;
  double lambda = 0.0;
  Vec se;  // length p, NaN off the support; empty unless standard errors were requested
};

// cfg.sim is not consulted; n, p and q come from the data.
Estimate estimate(const StudyConfig& cfg, const GroupedDataset& ds);

struct RepSummary {
  int rep = 0;
  bool ok = false;
  std::string error;
  int active_size = 0;
  int true_positives = 0;
  double pe = 0.0;
  Vec coefs;          // beta_1..beta_k
  Vec se;             // standard errors for the same coefficients, NaN when not selected
  double beta_N = 0.0;  // mean of beta_j over j > s0 (the coordinates beyond the leading block)
  double sigma2 = 0.0;
  Vec theta;
  double lambda = 0.0;
};

// Fit-independent part of a summary: |S|, TP, beta_N, coefficients and PE.
RepSummary metrics(const GroupedDataset& ds, const Vec& beta_hat, const SimTruth& truth,
                   const Vec& theta, double sigma2, int report_coefs);

struct Moments {
  double mean = 0.0;
  double sd = 0.0;   // n - 1 denominator, 0 for a single value
  double mse = 0.0;  // against the target, NaN when there is none
};

Moments moments(const std::vector<double>& values, double target);

struct Aggregate {
  int reps_ok = 0;
  int reps_failed = 0;
  Moments active_size;
  Moments true_positives;
  Moments pe;
  std::vector<Moments> coefs;
  Moments beta_N;
  Moments sigma2;
  std::vector<Moments> theta;
  // Fraction of reps whose nominal 95% interval covers the truth, per reported coefficient.
  std::vector<double> coverage;
};

Aggregate aggregate(const std::vector<RepSummary>& reps, const SimConfig& sim);

struct StudyResult {
  StudyConfig config;
  std::vector<RepSummary> reps;
  Aggregate summary;
};

// One replication; numerical failures are caught and recorded in the summary.
RepSummary run_rep(const StudyConfig& cfg, int rep);

// All replications on a pool of cfg.threads workers. Each rep uses its own substream
// and writes its own slot, so the result does not depend on the thread count.
StudyResult run_study(const StudyConfig& cfg);

}  // namespace pfgmm
