#pragma once

#include "pfgmm/baselines.hpp"
#include "pfgmm/pfgmm.hpp"

#include <vector>

namespace pfgmm {

struct LambdaPolicy {
  enum class Kind { Fixed, Bic, ExBic };
  Kind kind = Kind::Fixed;
  double value = 0.1;
  std::vector<double> grid;

  static LambdaPolicy fixed(double v) { return {Kind::Fixed, v, {}}; }
  static LambdaPolicy bic(std::vector<double> g) { return {Kind::Bic, 0.0, std::move(g)}; }
  static LambdaPolicy exbic(std::vector<double> g) { return {Kind::ExBic, 0.0, std::move(g)}; }
  void validate() const;
};

// `count` values spaced evenly in log between lo and hi, in decreasing order.
std::vector<double> log_grid(double lo, double hi, int count);

// -2 l_n(beta_hat, eta_hat) + (|S_hat| + dim_lambda) log n. Needs fit.eta_hat.
double bic(const GroupedDataset& ds, const FitResult& fit, int dim_lambda = 1);

// -2 L_n^P(beta_hat) + |S_hat| log n.
double exbic(const PfgmmProblem& prob, const FitResult& fit);

// Index of the smallest criterion value; ties go to the earlier entry.
std::size_t argmin(const std::vector<double>& values);

struct MpleSelection {
  FitResult fit;
  std::vector<double> lambdas;
  std::vector<double> criteria;
};

// MPLE over the grid, picking by BIC among every local solution fit_mple_path finds.
// `lambdas` and `criteria` have one entry per solution, so lambdas may repeat.
MpleSelection select_mple_bic(const GroupedDataset& ds, const PenaltySpec& pen,
                              const std::vector<double>& grid, const FitOptions& opts,
                              int max_support, int dim_lambda = 1);

struct PfgmmSelection {
  FitResult fit;
  std::vector<double> lambdas;
  std::vector<double> criteria;
};

// PFGMM at each grid value (PLS start at the same lambda), picking lambda by ExBIC.
PfgmmSelection select_pfgmm_exbic(const PfgmmProblem& prob, const GroupedDataset& transformed,
                                  const PenaltySpec& pen, const std::vector<double>& grid,
                                  const PfgmmOptions& opts);

}  // namespace pfgmm
