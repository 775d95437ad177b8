#pragma once

#include "pfgmm/lmm.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace pfgmm {

// Which covariates are made endogenous. Indices are 1-based as in the tables.
struct EndoSet {
  enum class Tag { Set1, Set2, Set3, Set4, Custom };
  Tag tag = Tag::Set1;
  std::vector<int> custom;

  static EndoSet set(int k);
  static EndoSet from_list(std::vector<int> one_based);
  static EndoSet parse(std::string_view text);  // "set1".."set4" or "6,7,8"

  // 0-based column indices for a design with p columns.
  std::vector<int> columns(int p) const;
  std::string name() const;
};

enum class EndoKind { None, Level1, Level2Intercept, Level2Slope };

struct Endogeneity {
  EndoKind kind = EndoKind::None;
  double strength = 0.0;  // rho_e or rho_b
  EndoSet set;

  std::string name() const;
};

struct SimConfig {
  int I = 25;
  int n_i = 6;
  int p = 300;
  int q = 2;
  Vec beta0;
  Vec theta0;  // random-effect variances
  double sigma2_0 = 0.25;
  double rho = 0.5;
  Endogeneity endo;
  std::uint64_t seed = 1;
  int reps = 100;

  static SimConfig example21();
  int n() const { return I * n_i; }
  int s() const;
  void validate() const;
};

struct SimTruth {
  ModelParams params;
  ActiveSet support;
  Vec eps;
  std::vector<Vec> b;  // per group, length q
};

struct SimDraw {
  GroupedDataset data;
  SimTruth truth;
};

// Independent generator for replication `rep` of a study with master seed `seed`.
std::mt19937_64 rep_engine(std::uint64_t seed, int rep, std::uint64_t stream = 0);

// One replication: draws X, b, eps, applies the configured endogeneity and forms y.
SimDraw generate(const SimConfig& cfg, int rep);

// X_jk <- (X_jk + 1)(rho_e eps_j + 1) on the listed columns, observation by observation.
Mat inject_level1(const Mat& X, const Vec& eps, double rho_e, const std::vector<int>& columns);

// X_jk <- (X_jk + 1)(rho_b b_ik + 1) using the group's k-th random effect (k = 0 intercept,
// 1 slope).
Mat inject_level2(const Mat& X, const std::vector<int>& group_sizes, const std::vector<Vec>& b,
                  int k, double rho_b, const std::vector<int>& columns);

// Dataset versions: transform X, take Z as the first q columns of the new X and
// recompute y = X beta0 + Z b + eps from the truth record.
GroupedDataset inject_level1(const GroupedDataset& ds, const SimTruth& truth, double rho_e,
                             const EndoSet& set);
GroupedDataset inject_level2(const GroupedDataset& ds, const SimTruth& truth, double rho_b,
                             const EndoSet& set, EndoKind which);

// rho s / sqrt(2 rho^2 s^2 + 1): correlation induced by either injector, s the sd of
// the driving variable.
double injected_correlation(double rho, double sd);

}  // namespace pfgmm
