#pragma once

#include "pfgmm/linalg.hpp"

#include <string>
#include <vector>

namespace pfgmm {

// Grouped (clustered) data for y_i = X_i beta + Z_i b_i + eps_i.
// Groups are stored contiguously: rows [offset(g), offset(g) + size(g)).
class GroupedDataset {
 public:
  GroupedDataset() = default;
  GroupedDataset(Vec y, Mat X, Mat Z, std::vector<int> group_sizes,
                 std::vector<std::string> group_labels = {});

  int n() const { return static_cast<int>(y_.size()); }
  int p() const { return static_cast<int>(X_.cols()); }
  int q() const { return static_cast<int>(Z_.cols()); }
  int num_groups() const { return static_cast<int>(sizes_.size()); }

  int offset(int g) const { return offsets_[static_cast<std::size_t>(g)]; }
  int size(int g) const { return sizes_[static_cast<std::size_t>(g)]; }
  const std::vector<int>& group_sizes() const { return sizes_; }
  const std::vector<std::string>& group_labels() const { return labels_; }

  const Vec& y() const { return y_; }
  const Mat& X() const { return X_; }
  const Mat& Z() const { return Z_; }

  auto y_group(int g) const { return y_.segment(offset(g), size(g)); }
  auto X_group(int g) const { return X_.middleRows(offset(g), size(g)); }
  auto Z_group(int g) const { return Z_.middleRows(offset(g), size(g)); }

  // Same grouping, different response.
  GroupedDataset with_response(Vec y) const;
  // Same grouping and response, fixed-effect design restricted to `columns`.
  GroupedDataset with_columns(const std::vector<int>& columns) const;
  // Groups reordered by `order` (a permutation of 0..I-1).
  GroupedDataset permuted(const std::vector<int>& order) const;

  // Z as a dense n x (q I) block-diagonal matrix. Tests only.
  Mat dense_Z() const;

 private:
  Vec y_;
  Mat X_;
  Mat Z_;
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  std::vector<std::string> labels_;
};

enum class CovKind { Diagonal, Isotropic };

// Parameterisation of the random-effect covariance Psi_theta.
// Diagonal: Psi = diag(theta_1..theta_q). Isotropic: Psi = theta_1 I_q.
// theta entries are variances.
struct CovStructure {
  CovKind kind = CovKind::Diagonal;
  int q = 0;

  static CovStructure diagonal(int q) { return {CovKind::Diagonal, q}; }
  static CovStructure isotropic(int q) { return {CovKind::Isotropic, q}; }

  int num_params() const { return kind == CovKind::Diagonal ? q : (q > 0 ? 1 : 0); }
  // Which parameter drives diagonal entry k of Psi.
  int param_of(int k) const { return kind == CovKind::Diagonal ? k : 0; }
  Mat psi(const Vec& theta) const;
};

struct ModelParams {
  Vec beta;
  Vec theta;
  double sigma2 = 1.0;
  CovStructure cov;

  void validate(int p) const;
};

// Sorted set of 0-based coordinate indices.
class ActiveSet {
 public:
  ActiveSet() = default;
  explicit ActiveSet(std::vector<int> indices);

  static ActiveSet from_beta(const Vec& beta, double zero_tol = 1e-8);

  const std::vector<int>& indices() const { return indices_; }
  int size() const { return static_cast<int>(indices_.size()); }
  bool empty() const { return indices_.empty(); }
  bool contains(int j) const;
  int intersection_size(const ActiveSet& other) const;

  bool operator==(const ActiveSet&) const = default;

 private:
  std::vector<int> indices_;
};

// Half the smallest nonzero |beta_j| over `support`.
double signal_strength(const Vec& beta, const ActiveSet& support);

// V_i = sigma^-2 Z_i Psi Z_i' + I, one block per group.
BlockDiag build_V(const GroupedDataset& ds, const ModelParams& params);

// Marginal covariance blocks sigma^2 V_i = Z_i Psi Z_i' + sigma^2 I.
BlockDiag marginal_covariance(const GroupedDataset& ds, const Vec& theta, double sigma2,
                              const CovStructure& cov);

// Gaussian log-likelihood l_n(beta, eta), evaluated group by group.
double log_likelihood(const GroupedDataset& ds, const ModelParams& params);

// (y - X beta)' Vtilde^{-1} (y - X beta) for a block-diagonal Vtilde^{-1}.
double profile_quadratic(const GroupedDataset& ds, const Vec& beta, const BlockDiag& vtilde_inv);

}  // namespace pfgmm
