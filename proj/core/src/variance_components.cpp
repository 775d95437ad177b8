#include "pfgmm/variance_components.hpp"

#include "pfgmm/error.hpp"

#include <ceres/ceres.h>

#include <cmath>
#include <numbers>

namespace pfgmm {

namespace {

struct GroupPass {
  double negloglik = 0.0;
  Vec grad;  // d(-l/n)/du
  Vec beta;
  bool ok = true;
};

class VcObjective final : public ceres::FirstOrderFunction {
 public:
  VcObjective(const GroupedDataset& ds, const CovStructure& cov, VcMode mode)
      : ds_(ds), cov_(cov), mode_(mode), m_(cov.num_params()) {}

  int NumParameters() const override { return m_ + 1; }

  bool Evaluate(const double* u, double* cost, double* gradient) const override {
    const GroupPass pass = run(u, gradient != nullptr);
    if (!pass.ok || !std::isfinite(pass.negloglik)) return false;
    *cost = pass.negloglik;
    if (gradient != nullptr) {
      for (int k = 0; k <= m_; ++k) gradient[k] = pass.grad(k);
    }
    return true;
  }

  GroupPass run(const double* u, bool want_grad) const {
    GroupPass out;
    Vec var(m_ + 1);
    for (int k = 0; k <= m_; ++k) var(k) = kVarianceFloor + std::exp(u[k]);
    const double sigma2 = var(m_);
    const int p = mode_ == VcMode::Residual ? 0 : ds_.p();
    const int q = ds_.q();

    std::vector<Mat> sinv(static_cast<std::size_t>(ds_.num_groups()));
    double logdet = 0.0;
    Mat M = Mat::Zero(p, p);
    Vec c = Vec::Zero(p);
    for (int g = 0; g < ds_.num_groups(); ++g) {
      const auto Zg = ds_.Z_group(g);
      Mat S = Mat::Identity(ds_.size(g), ds_.size(g)) * sigma2;
      for (int j = 0; j < q; ++j) S.noalias() += var(cov_.param_of(j)) * Zg.col(j) * Zg.col(j).transpose();
      Eigen::LLT<Mat> llt(S);
      if (llt.info() != Eigen::Success) {
        out.ok = false;
        return out;
      }
      logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      Mat& Si = sinv[static_cast<std::size_t>(g)];
      Si = llt.solve(Mat::Identity(ds_.size(g), ds_.size(g)));
      if (p > 0) {
        const auto Xg = ds_.X_group(g);
        const Mat SX = Si * Xg;
        M.noalias() += Xg.transpose() * SX;
        c.noalias() += SX.transpose() * ds_.y_group(g);
      }
    }

    Eigen::LLT<Mat> mllt;
    Mat Minv;
    Vec beta = Vec::Zero(p);
    double logdet_M = 0.0;
    if (p > 0) {
      mllt.compute(M);
      if (mllt.info() != Eigen::Success) {
        out.ok = false;
        return out;
      }
      beta = mllt.solve(c);
      logdet_M = 2.0 * mllt.matrixLLT().diagonal().array().log().sum();
      if (mode_ == VcMode::REML) Minv = mllt.solve(Mat::Identity(p, p));
    }

    double quad = 0.0;
    Vec dl = Vec::Zero(m_ + 1);  // dl/dvar
    for (int g = 0; g < ds_.num_groups(); ++g) {
      const Mat& Si = sinv[static_cast<std::size_t>(g)];
      Vec r = ds_.y_group(g);
      if (p > 0) r -= ds_.X_group(g) * beta;
      const Vec a = Si * r;
      quad += r.dot(a);
      if (!want_grad) continue;
      const auto Zg = ds_.Z_group(g);
      for (int j = 0; j < q; ++j) {
        const Vec sz = Si * Zg.col(j);
        const double za = Zg.col(j).dot(a);
        double d = -0.5 * (Zg.col(j).dot(sz) - za * za);
        if (mode_ == VcMode::REML) {
          const Vec w = ds_.X_group(g).transpose() * sz;
          d += 0.5 * w.dot(Minv * w);
        }
        dl(cov_.param_of(j)) += d;
      }
      double d = -0.5 * (Si.trace() - a.squaredNorm());
      if (mode_ == VcMode::REML) {
        const Mat G = Si * ds_.X_group(g);
        d += 0.5 * (Minv * (G.transpose() * G)).trace();
      }
      dl(m_) += d;
    }

    double loglik = -0.5 * (ds_.n() * std::log(2.0 * std::numbers::pi) + logdet + quad);
    if (mode_ == VcMode::REML) loglik -= 0.5 * logdet_M;
    const double n = ds_.n();
    out.negloglik = -loglik / n;
    out.beta = std::move(beta);
    if (want_grad) {
      out.grad.resize(m_ + 1);
      for (int k = 0; k <= m_; ++k) out.grad(k) = -dl(k) * (var(k) - kVarianceFloor) / n;
    }
    return out;
  }

 private:
  const GroupedDataset& ds_;
  CovStructure cov_;
  VcMode mode_;
  int m_;
};

double starting_variance(const GroupedDataset& ds, VcMode mode) {
  double v = 0.0;
  if (mode == VcMode::Residual || ds.p() == 0) {
    v = ds.y().squaredNorm() / ds.n();
  } else {
    const Vec b = ds.X().colPivHouseholderQr().solve(ds.y());
    const int dof = std::max(1, ds.n() - ds.p());
    v = (ds.y() - ds.X() * b).squaredNorm() / dof;
  }
  return std::max(v, 1e-8);
}

}  // namespace

VcResult fit_variance_components(const GroupedDataset& ds, const CovStructure& cov, VcMode mode,
                                 const std::optional<VcStart>& start) {
  if (cov.q != ds.q()) throw DimensionError("covariance structure q does not match dataset");
  if (mode != VcMode::Residual && ds.p() >= ds.n()) {
    throw RankDeficiency("variance components need p < n");
  }
  const int m = cov.num_params();
  std::vector<double> u(static_cast<std::size_t>(m + 1));
  if (start) {
    if (start->theta.size() != m) throw DimensionError("start theta has wrong length");
    for (int k = 0; k < m; ++k) u[static_cast<std::size_t>(k)] = std::log(std::max(start->theta(k), 1e-8));
    u[static_cast<std::size_t>(m)] = std::log(std::max(start->sigma2, 1e-8));
  } else {
    const double v = starting_variance(ds, mode);
    for (int k = 0; k < m; ++k) u[static_cast<std::size_t>(k)] = std::log(0.5 * v / std::max(1, ds.q()));
    u[static_cast<std::size_t>(m)] = std::log(0.5 * v);
  }

  auto* objective = new VcObjective(ds, cov, mode);
  ceres::GradientProblem problem(objective);
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::BFGS;
  options.max_num_iterations = 500;
  options.function_tolerance = 1e-14;
  options.gradient_tolerance = 1e-11;
  options.parameter_tolerance = 1e-14;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, u.data(), &summary);

  const GroupPass pass = objective->run(u.data(), true);
  if (!pass.ok) throw ConditioningError("variance-component fit ended at a singular covariance");
  VcResult out;
  out.theta.resize(m);
  for (int k = 0; k < m; ++k) out.theta(k) = kVarianceFloor + std::exp(u[static_cast<std::size_t>(k)]);
  out.sigma2 = kVarianceFloor + std::exp(u[static_cast<std::size_t>(m)]);
  out.beta = pass.beta;
  out.loglik = -pass.negloglik * ds.n();
  out.grad_norm = pass.grad.norm();
  out.iterations = static_cast<int>(summary.iterations.size());
  out.converged = summary.termination_type == ceres::CONVERGENCE;
  return out;
}

Vec gls_beta(const GroupedDataset& ds, const Vec& theta, double sigma2, const CovStructure& cov) {
  const BlockDiag sigma = marginal_covariance(ds, theta, sigma2, cov);
  Mat M = Mat::Zero(ds.p(), ds.p());
  Vec c = Vec::Zero(ds.p());
  for (int g = 0; g < ds.num_groups(); ++g) {
    Eigen::LLT<Mat> llt(sigma.block(g));
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("marginal covariance not positive definite", g);
    }
    const Mat SX = llt.solve(Mat(ds.X_group(g)));
    M.noalias() += ds.X_group(g).transpose() * SX;
    c.noalias() += SX.transpose() * ds.y_group(g);
  }
  Eigen::LLT<Mat> mllt(M);
  if (mllt.info() != Eigen::Success) throw RankDeficiency("X' Sigma^-1 X is singular");
  return mllt.solve(c);
}

}  // namespace pfgmm
