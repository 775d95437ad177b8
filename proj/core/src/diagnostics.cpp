#include "pfgmm/error.hpp"
#include "pfgmm/matrix_kit.hpp"
#include "pfgmm/pfgmm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pfgmm {

namespace {

// Moment columns over the active set: F_j for every j, H_j where it exists.
Mat moment_columns(const InstrumentSet& inst, const std::vector<int>& active, Vec* weights,
                   const GmmWeights& w) {
  std::vector<std::pair<int, bool>> cols;
  for (int j : active) cols.emplace_back(j, false);
  for (int j : active) {
    if (inst.has_H[static_cast<std::size_t>(j)]) cols.emplace_back(j, true);
  }
  Mat G(inst.F_star.rows(), static_cast<Eigen::Index>(cols.size()));
  if (weights != nullptr) weights->resize(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto [j, is_h] = cols[c];
    const auto k = static_cast<Eigen::Index>(c);
    G.col(k) = is_h ? inst.H_star.col(j) : inst.F_star.col(j);
    if (weights != nullptr) (*weights)(k) = is_h ? w.wH(j) : w.wF(j);
  }
  return G;
}

Mat upsilon(const GroupedDataset& ds, const ProxyTransform& proxy, const Mat& G, const Vec& theta,
            double sigma2, const CovStructure& cov) {
  const BlockDiag sigma = marginal_covariance(ds, theta, sigma2, cov);
  Mat U = Mat::Zero(G.cols(), G.cols());
  for (int g = 0; g < ds.num_groups(); ++g) {
    const Mat& R = proxy.vz_invsqrt.block(g);
    const Mat B = R * sigma.block(g) * R;
    const auto Gg = G.middleRows(ds.offset(g), ds.size(g));
    U.noalias() += Gg.transpose() * B * Gg;
  }
  U /= static_cast<double>(ds.n());
  return 0.5 * (U + U.transpose());
}

std::string c1_label(const char* prefix, double c1) {
  std::ostringstream out;
  out << prefix << ".C1=" << c1;
  return out.str();
}

}  // namespace

AsymptoticDiag asymptotic_diag(const GroupedDataset& ds, const PfgmmProblem& prob,
                               const ProxyTransform& proxy, const FitResult& fit,
                               const Vec& theta, double sigma2, const CovStructure& cov) {
  AsymptoticDiag out;
  out.active = fit.active_set.indices();
  if (out.active.empty()) throw RankDeficiency("asymptotic_diag needs a nonempty active set");
  const double n = ds.n();
  Vec wdiag;
  const Mat G = moment_columns(prob.instruments(), out.active, &wdiag, prob.weights());
  Mat XS(ds.n(), static_cast<Eigen::Index>(out.active.size()));
  for (std::size_t k = 0; k < out.active.size(); ++k) {
    XS.col(static_cast<Eigen::Index>(k)) = prob.X().col(out.active[k]);
  }
  out.A_hat = XS.transpose() * G / n;
  out.Upsilon_hat = upsilon(ds, proxy, G, theta, sigma2, cov);
  const Mat AJ = out.A_hat * wdiag.asDiagonal();
  out.Sigma_hat = 2.0 * AJ * out.A_hat.transpose();
  out.Sigma_hat = 0.5 * (out.Sigma_hat + out.Sigma_hat.transpose()).eval();
  out.Gamma_hat = 4.0 * AJ * out.Upsilon_hat * AJ.transpose();
  out.Gamma_hat = 0.5 * (out.Gamma_hat + out.Gamma_hat.transpose()).eval();

  Eigen::LDLT<Mat> ldlt(out.Sigma_hat);
  const EigExtrema ext = eig_extrema(out.Sigma_hat, 1e-8);
  if (ldlt.info() != Eigen::Success || !(ext.min > 1e-12 * std::max(1.0, ext.max))) {
    throw RankDeficiency("Sigma_hat is singular");
  }
  const Mat Sinv = ldlt.solve(Mat::Identity(out.Sigma_hat.rows(), out.Sigma_hat.cols()));
  const Mat cov_beta = Sinv * out.Gamma_hat * Sinv / n;
  out.se = cov_beta.diagonal().array().max(0.0).sqrt().matrix();
  return out;
}

AssumptionReport check_assumptions_IM(const GroupedDataset& ds, const PfgmmProblem& prob,
                                      const ProxyTransform& proxy, const FitResult& fit,
                                      const std::optional<ModelParams>& true_params,
                                      const std::optional<PenaltySpec>& pen) {
  AssumptionReport report;
  const InstrumentSet& inst = prob.instruments();
  const double n = ds.n();
  const double inf = std::numeric_limits<double>::infinity();

  // (I2) column variance range.
  double f_lo = inf, f_hi = 0.0, h_lo = inf, h_hi = 0.0;
  for (int j = 0; j < inst.p(); ++j) {
    const double vf = inst.F_star.col(j).squaredNorm() / n;
    f_lo = std::min(f_lo, vf);
    f_hi = std::max(f_hi, vf);
    if (inst.has_H[static_cast<std::size_t>(j)]) {
      const double vh = inst.H_star.col(j).squaredNorm() / n;
      h_lo = std::min(h_lo, vh);
      h_hi = std::max(h_hi, vh);
    }
  }
  report.checks.push_back({"I2.F", f_lo, f_hi, f_lo > kInstrumentVarFloor && std::isfinite(f_hi), true});
  if (std::isfinite(h_lo)) {
    report.checks.push_back({"I2.H", h_lo, h_hi, h_lo > kInstrumentVarFloor && std::isfinite(h_hi), true});
  }

  const std::vector<int>& active = fit.active_set.indices();
  if (active.empty()) return report;

  // (I3) variance of residual-times-instrument over the active set.
  const Vec r = prob.y() - prob.X() * fit.beta_hat;
  double i3_f = inf, i3_h = inf;
  for (int j : active) {
    const Vec uf = r.cwiseProduct(inst.F_star.col(j));
    i3_f = std::min(i3_f, (uf.array() - uf.mean()).square().sum() / n);
    if (inst.has_H[static_cast<std::size_t>(j)]) {
      const Vec uh = r.cwiseProduct(inst.H_star.col(j));
      i3_h = std::min(i3_h, (uh.array() - uh.mean()).square().sum() / n);
    }
  }
  report.checks.push_back({"I3.F", i3_f, kInstrumentVarFloor, i3_f > kInstrumentVarFloor, true});
  if (std::isfinite(i3_h)) {
    report.checks.push_back({"I3.H", i3_h, kInstrumentVarFloor, i3_h > kInstrumentVarFloor, true});
  }

  // (I4) spectrum of A A'.
  const Mat G = moment_columns(inst, active, nullptr, prob.weights());
  Mat XS(ds.n(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) {
    XS.col(static_cast<Eigen::Index>(k)) = prob.X().col(active[k]);
  }
  const Mat A = XS.transpose() * G / n;
  const EigExtrema aa = eig_extrema(A * A.transpose(), 1e-8);
  report.checks.push_back({"I4.min", aa.min, 0.0, aa.min > 0.0, true});
  report.checks.push_back({"I4.max", aa.max, inf, true, false});

  // (I5) smallest eigenvalue of Upsilon.
  std::optional<std::pair<Vec, double>> eta;
  CovStructure cov = CovStructure::diagonal(ds.q());
  if (true_params) {
    eta.emplace(true_params->theta, true_params->sigma2);
    cov = true_params->cov;
  } else if (fit.eta_hat) {
    eta.emplace(fit.eta_hat->theta, fit.eta_hat->sigma2);
  }
  if (eta) {
    const Mat U = upsilon(ds, proxy, G, eta->first, eta->second, cov);
    const EigExtrema ue = eig_extrema(U, 1e-8);
    report.checks.push_back({"I5", ue.min, 0.0, ue.min > 0.0, true});
  }

  // (M1) proxy versus sigma^-2 Psi.
  if (true_params) {
    const Mat target = true_params->cov.psi(true_params->theta) / true_params->sigma2;
    for (double c1 : {1.5, 2.0, 5.0}) {
      const double lo_a = eig_extrema(c1 * proxy.M - target, 1e-8).min;
      const double lo_b = eig_extrema(c1 * std::log(n) * target - proxy.M, 1e-8).min;
      report.checks.push_back({c1_label("M1a", c1), lo_a, 0.0, lo_a >= -1e-12, true});
      report.checks.push_back({c1_label("M1b", c1), lo_b, 0.0, lo_b >= -1e-12, true});
    }
  }

  // (M2) max over inactive j of ||A_j|| sqrt(log s / n), no verdict.
  if (pen) {
    double worst = 0.0;
    for (int j = 0; j < prob.p(); ++j) {
      if (fit.active_set.contains(j)) continue;
      worst = std::max(worst, (G.transpose() * prob.X().col(j)).norm() / n);
    }
    const double s = static_cast<double>(active.size());
    const double lhs = worst * std::sqrt(std::log(std::max(s, 1.0)) / n);
    report.checks.push_back({"M2.P(0+)", lhs, pen_value(*pen, 0.0), lhs < pen_value(*pen, 0.0), false});
    const double d0 = pen_deriv(*pen, 1e-300);
    report.checks.push_back({"M2.P'(0+)", lhs, d0, lhs < d0, false});
  }
  return report;
}

}  // namespace pfgmm
