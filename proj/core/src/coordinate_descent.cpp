#include "coordinate_descent.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <cmath>

namespace pfgmm::detail {

std::vector<char> penalized_mask(int p, const std::vector<int>& unpenalized) {
  std::vector<char> mask(static_cast<std::size_t>(p), 1);
  for (int j : unpenalized) {
    if (j < 0 || j >= p) throw InvalidParameter("unpenalized index out of range");
    mask[static_cast<std::size_t>(j)] = 0;
  }
  return mask;
}

double ls_objective(const LsProblem& prob, const Vec& beta) {
  const double n = static_cast<double>(prob.y.size());
  double value = (prob.y - prob.X * beta).squaredNorm() / (2.0 * n);
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (prob.penalized[static_cast<std::size_t>(j)] && beta(j) != 0.0) {
      value += pen_value(prob.pen, std::abs(beta(j)));
    }
  }
  return value;
}

CdOutcome ls_coordinate_descent(const LsProblem& prob, Vec& beta, int max_sweeps, double tol,
                                std::vector<double>* trace) {
  const int p = static_cast<int>(prob.X.cols());
  const double n = static_cast<double>(prob.y.size());
  if (beta.size() != p) throw DimensionError("beta has wrong length");
  const Vec half_norm = prob.X.colwise().squaredNorm().transpose() / (2.0 * n);
  Vec resid = prob.y - prob.X * beta;
  CdOutcome out;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_step = 0.0;
    for (int j = 0; j < p; ++j) {
      const double a = half_norm(j);
      if (a <= 0.0) {
        beta(j) = 0.0;
        continue;
      }
      const double old = beta(j);
      const double b = -(prob.X.col(j).dot(resid) / n + 2.0 * a * old);
      const double w = prob.penalized[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      const double t = minimize_penalized_quadratic(prob.pen, a, b, w).t;
      if (t != old) {
        resid.noalias() -= (t - old) * prob.X.col(j);
        beta(j) = t;
        max_step = std::max(max_step, std::abs(t - old));
      }
    }
    out.sweeps = sweep;
    if (trace != nullptr) trace->push_back(ls_objective(prob, beta));
    if (max_step < tol) {
      out.converged = true;
      break;
    }
  }
  out.objective = ls_objective(prob, beta);
  return out;
}

CdOutcome weighted_l1_coordinate_descent(const Mat& X, const Vec& y, const Vec& w, Vec& beta,
                                         int max_sweeps, double tol) {
  const int p = static_cast<int>(X.cols());
  const double n = static_cast<double>(y.size());
  if (beta.size() != p || w.size() != p) throw DimensionError("beta or weights have wrong length");
  const Vec half_norm = X.colwise().squaredNorm().transpose() / (2.0 * n);
  Vec resid = y - X * beta;
  CdOutcome out;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_step = 0.0;
    for (int j = 0; j < p; ++j) {
      const double a = half_norm(j);
      if (a <= 0.0) {
        beta(j) = 0.0;
        continue;
      }
      const double old = beta(j);
      const double b = -(X.col(j).dot(resid) / n + 2.0 * a * old);
      double t = 0.0;
      if (b < -w(j)) {
        t = -(b + w(j)) / (2.0 * a);
      } else if (b > w(j)) {
        t = -(b - w(j)) / (2.0 * a);
      }
      if (t != old) {
        resid.noalias() -= (t - old) * X.col(j);
        beta(j) = t;
        max_step = std::max(max_step, std::abs(t - old));
      }
    }
    out.sweeps = sweep;
    if (max_step < tol) {
      out.converged = true;
      break;
    }
  }
  out.objective = (y - X * beta).squaredNorm() / (2.0 * n) + w.dot(beta.cwiseAbs());
  return out;
}

double ls_kkt_residual(const LsProblem& prob, const Vec& beta, double zero_tol) {
  const double n = static_cast<double>(prob.y.size());
  const Vec grad = -prob.X.transpose() * (prob.y - prob.X * beta) / n;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double g = grad(j);
    double v = 0.0;
    if (!prob.penalized[static_cast<std::size_t>(j)]) {
      v = std::abs(g);
    } else if (std::abs(beta(j)) > zero_tol) {
      const double t = std::abs(beta(j));
      v = std::abs(g + std::copysign(pen_deriv(prob.pen, t), beta(j)));
    } else {
      const double d0 = pen_deriv(prob.pen, 1e-300);
      v = std::max(0.0, std::abs(g) - d0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace pfgmm::detail
