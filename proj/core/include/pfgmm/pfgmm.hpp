#pragma once

#include "pfgmm/baselines.hpp"
#include "pfgmm/lmm.hpp"
#include "pfgmm/penalty.hpp"
#include "pfgmm/proxy.hpp"

#include <optional>
#include <vector>

namespace pfgmm {

struct InstrumentSource {
  enum class Kind { CovariateSieve, ExternalW };
  Kind kind = Kind::CovariateSieve;
  Mat W;  // n x p, raw (untransformed) instruments for ExternalW

  static InstrumentSource sieve() { return {}; }
  static InstrumentSource external(Mat w) { return {Kind::ExternalW, std::move(w)}; }
};

inline constexpr double kInstrumentVarFloor = 1e-10;

// Sieve instruments in the transformed space, one F and one H column per coordinate.
// F_j = W*_j and H_j = (W*_j)^2, both centred. A raw column that is a nonzero
// constant (the intercept) keeps an uncentred F and has no H column.
struct InstrumentSet {
  Mat F_star;
  Mat H_star;
  std::vector<char> has_H;
  std::vector<char> centred_F;
  InstrumentSource::Kind source = InstrumentSource::Kind::CovariateSieve;
  int intercept = -1;  // 0-based column treated as the intercept, or -1

  int p() const { return static_cast<int>(F_star.cols()); }
};

InstrumentSet make_instruments(const GroupedDataset& ds, const BlockDiag& vz_invsqrt,
                               const InstrumentSource& source,
                               double var_floor = kInstrumentVarFloor);

// Inverse sample variances (mean square for an uncentred F column); wH_j = 0 without H_j.
struct GmmWeights {
  Vec wF;
  Vec wH;
};

GmmWeights gmm_weights(const InstrumentSet& inst);

// Everything the PFGMM loss needs, in the transformed space.
class PfgmmProblem {
 public:
  PfgmmProblem(const GroupedDataset& transformed, InstrumentSet inst, GmmWeights w,
               std::vector<int> forced = {});

  int n() const { return static_cast<int>(y_.size()); }
  int p() const { return static_cast<int>(X_.cols()); }
  const Mat& X() const { return X_; }
  const Vec& y() const { return y_; }
  const InstrumentSet& instruments() const { return inst_; }
  const GmmWeights& weights() const { return w_; }
  const std::vector<int>& forced() const { return forced_; }

  // Coordinates whose moments enter the loss: supp(beta) plus the forced set.
  std::vector<int> moment_support(const Vec& beta) const;

  // sum over the moment support of wF_j vF_j^2 + wH_j vH_j^2.
  double loss(const Vec& beta) const;
  // Loss with the moment set fixed to `support`.
  double restricted_loss(const Vec& beta, const std::vector<int>& support) const;
  // Gradient of restricted_loss in every coordinate.
  Vec restricted_gradient(const Vec& beta, const std::vector<int>& support) const;

  // Q_n = loss + sum over penalised j of P(|beta_j|).
  double objective(const Vec& beta, const PenaltySpec& pen) const;

  // n^-1 F' X and n^-1 H' X, computed once.
  const Mat& cross_F() const { return CF_; }
  const Mat& cross_H() const { return CH_; }

 private:
  Mat X_;
  Vec y_;
  InstrumentSet inst_;
  GmmWeights w_;
  std::vector<int> forced_;
  std::vector<char> forced_mask_;
  Mat CF_;
  Mat CH_;
};

// Unweighted moment functional: sum over supp(beta) of wF vF^2 + wH vH^2.
double pfgmm_loss(const GroupedDataset& transformed, const Vec& beta, const InstrumentSet& inst,
                  const GmmWeights& w);

struct PfgmmOptions {
  enum class Init { Zero, Pls };
  Init init = Init::Pls;
  int max_sweeps = 500;
  double step_tol = 1e-8;
  double zero_tol = 1e-8;
  double tie_tol = 1e-12;
  // After coordinate descent, also try dropping single coefficients with P'(|b|) > 0
  // and re-fitting the remaining support.
  bool drop_search = true;
  // Also try activating a zero coefficient and re-fitting the enlarged support.
  bool add_search = true;
  // Local: drops only where P'(|b|) > 0, so the fit stays a local minimiser near its
  // start. Global: any coefficient may be dropped, which on small p reaches the
  // minimum over all supports. The global minimiser can discard strong true signals,
  // since a smaller support also carries fewer moments.
  enum class Search { Local, Global };
  Search search = Search::Local;
  // Unpenalised columns; their moments are always in the loss, which rules out
  // the trivial minimiser beta = 0.
  std::vector<int> unpenalized;
  InstrumentSource instruments;
};

FitResult fit_pfgmm(const GroupedDataset& ds, const PenaltySpec& pen, const ProxySpec& proxy,
                    const PfgmmOptions& opts);

// What fit_pfgmm builds before the descent; kept around for diagnostics.
struct PfgmmSetup {
  ProxyTransform proxy;
  GroupedDataset transformed;
  PfgmmProblem problem;
};

PfgmmSetup prepare_pfgmm(const GroupedDataset& ds, const ProxySpec& proxy,
                         const PfgmmOptions& opts);

// Starting point per opts.init: zero, or PLS on the transformed data at pen.lambda.
Vec pfgmm_start(const PfgmmSetup& setup, const PenaltySpec& pen, const PfgmmOptions& opts);

// Coordinate descent on a prepared problem; `beta` is the starting point.
FitResult fit_pfgmm_problem(const PfgmmProblem& prob, const PenaltySpec& pen, Vec beta,
                            const PfgmmOptions& opts);

struct AsymptoticDiag {
  Mat A_hat;        // s x 2s
  Mat Upsilon_hat;  // 2s x 2s
  Mat Gamma_hat;    // s x s
  Mat Sigma_hat;    // s x s
  Vec se;           // standard errors of beta_hat over the active set
  std::vector<int> active;
};

// Sandwich diagnostics at the fitted support. `eta` supplies V (theta, sigma2).
AsymptoticDiag asymptotic_diag(const GroupedDataset& ds, const PfgmmProblem& prob,
                               const ProxyTransform& proxy, const FitResult& fit,
                               const Vec& theta, double sigma2, const CovStructure& cov);

// Finite-sample surrogates of the instrument and proxy assumptions. `true_params`
// (simulation only) enables the proxy inequalities; `pen` enables the margin
// against P(0+) and P'(0+).
AssumptionReport check_assumptions_IM(const GroupedDataset& ds, const PfgmmProblem& prob,
                                      const ProxyTransform& proxy, const FitResult& fit,
                                      const std::optional<ModelParams>& true_params,
                                      const std::optional<PenaltySpec>& pen = std::nullopt);

}  // namespace pfgmm
