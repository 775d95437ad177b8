#pragma once

#include "pfgmm/linalg.hpp"
#include "pfgmm/penalty.hpp"

#include <vector>

namespace pfgmm::detail {

// Cyclic coordinate descent for
//   (2n)^-1 ||y - X beta||^2 + sum_{j penalized} P(|beta_j|)
// with exact one-dimensional minimisation in each coordinate.
struct LsProblem {
  const Mat& X;
  const Vec& y;
  const PenaltySpec& pen;
  const std::vector<char>& penalized;
};

struct CdOutcome {
  int sweeps = 0;
  bool converged = false;
  double objective = 0.0;
};

double ls_objective(const LsProblem& prob, const Vec& beta);

// Updates beta in place. `trace`, if given, receives the objective after each sweep.
CdOutcome ls_coordinate_descent(const LsProblem& prob, Vec& beta, int max_sweeps, double tol,
                                std::vector<double>* trace = nullptr);

// Coordinate descent for (2n)^-1 ||y - X beta||^2 + sum_j w_j |beta_j|, w_j >= 0.
CdOutcome weighted_l1_coordinate_descent(const Mat& X, const Vec& y, const Vec& w, Vec& beta,
                                         int max_sweeps, double tol);

// Largest violation of the coordinatewise optimality conditions.
double ls_kkt_residual(const LsProblem& prob, const Vec& beta, double zero_tol);

std::vector<char> penalized_mask(int p, const std::vector<int>& unpenalized);

}  // namespace pfgmm::detail
