#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pfgmm {

enum class PenaltyFamily { Scad, Mcp, L1, HardThreshold };

// Folded-concave penalty P_lambda(|t|). `shape` is the SCAD `a` or the MCP
// `gamma`; it is ignored for L1 and hard thresholding.
struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::Scad;
  double lambda = 0.1;
  double shape = 3.7;

  static PenaltySpec scad(double lambda, double a = 3.7) { return {PenaltyFamily::Scad, lambda, a}; }
  static PenaltySpec mcp(double lambda, double gamma = 3.0) { return {PenaltyFamily::Mcp, lambda, gamma}; }
  static PenaltySpec l1(double lambda) { return {PenaltyFamily::L1, lambda, 0.0}; }
  static PenaltySpec hard(double lambda) { return {PenaltyFamily::HardThreshold, lambda, 0.0}; }

  PenaltySpec with_lambda(double value) const {
    PenaltySpec out = *this;
    out.lambda = value;
    return out;
  }

  void validate() const;
};

// Parses `scad:lambda=0.1,a=3.7`, `mcp:lambda=0.1,gamma=3`, `l1:lambda=0.1`,
// `hard:lambda=0.1`. Missing keys take the family defaults.
PenaltySpec parse_penalty(std::string_view text);
std::string to_string(const PenaltySpec& spec);

double pen_value(const PenaltySpec& spec, double t);
double pen_deriv(const PenaltySpec& spec, double t);

// Maximal local concavity of the penalty over the coordinates of beta_S.
double zeta(const PenaltySpec& spec, std::span<const double> beta_S);

// sup of the local concavity over |t| in [lo, hi].
double max_concavity(const PenaltySpec& spec, double lo, double hi);

// On [lo, hi] the penalty equals c0 + c1 t + c2 t^2.
struct PenaltyPiece {
  double lo;
  double hi;
  double c0;
  double c1;
  double c2;
};

std::vector<PenaltyPiece> pieces(const PenaltySpec& spec);

struct ScalarMinimum {
  double t = 0.0;
  double value = 0.0;
};

// Exact minimiser over t of  a t^2 + b t + weight * P(|t|),  a > 0.
// With weight = 0 this is the plain quadratic minimiser.
ScalarMinimum minimize_penalized_quadratic(const PenaltySpec& spec, double a, double b,
                                           double weight = 1.0);

struct AssumptionCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = true;
  // false when the clause is an asymptotic rate with no honest finite-sample
  // cutoff; `pass` is then not a verdict and only the margin is reported.
  bool has_verdict = true;
  double margin() const { return rhs - lhs; }
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  bool all_pass() const;
  const AssumptionCheck* find(std::string_view name) const;
};

// Finite-sample surrogates of the penalty / signal assumptions.
// If `beta0_S` is empty the d_n/4 ball is taken over |t| >= 1.75 d_n.
AssumptionReport check_assumptions_PA(const PenaltySpec& spec, int n, int p, int s, double d_n,
                                      std::span<const double> beta0_S = {});

}  // namespace pfgmm
