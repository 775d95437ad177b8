#include "pfgmm/lmm.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace pfgmm {

GroupedDataset::GroupedDataset(Vec y, Mat X, Mat Z, std::vector<int> group_sizes,
                               std::vector<std::string> group_labels)
    : y_(std::move(y)), X_(std::move(X)), Z_(std::move(Z)), sizes_(std::move(group_sizes)),
      labels_(std::move(group_labels)) {
  if (sizes_.empty()) throw DimensionError("dataset needs at least one group");
  if (X_.rows() != y_.size() || Z_.rows() != y_.size()) {
    throw DimensionError("y, X and Z must have the same number of rows");
  }
  offsets_.resize(sizes_.size());
  int running = 0;
  for (std::size_t g = 0; g < sizes_.size(); ++g) {
    if (sizes_[g] < 1) throw DimensionError("group " + std::to_string(g) + " is empty");
    offsets_[g] = running;
    running += sizes_[g];
  }
  if (running != y_.size()) {
    throw DimensionError("group sizes sum to " + std::to_string(running) + " but n = " +
                         std::to_string(y_.size()));
  }
  if (labels_.empty()) {
    labels_.resize(sizes_.size());
    for (std::size_t g = 0; g < sizes_.size(); ++g) labels_[g] = std::to_string(g + 1);
  } else if (labels_.size() != sizes_.size()) {
    throw DimensionError("one label per group required");
  }
}

GroupedDataset GroupedDataset::with_response(Vec y) const {
  if (y.size() != y_.size()) throw DimensionError("response length mismatch");
  return GroupedDataset(std::move(y), X_, Z_, sizes_, labels_);
}

GroupedDataset GroupedDataset::with_columns(const std::vector<int>& columns) const {
  Mat Xs(n(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] < 0 || columns[c] >= p()) throw DimensionError("column index out of range");
    Xs.col(static_cast<Eigen::Index>(c)) = X_.col(columns[c]);
  }
  return GroupedDataset(y_, std::move(Xs), Z_, sizes_, labels_);
}

GroupedDataset GroupedDataset::permuted(const std::vector<int>& order) const {
  if (static_cast<int>(order.size()) != num_groups()) throw DimensionError("bad permutation");
  Vec y(n());
  Mat X(n(), p());
  Mat Z(n(), q());
  std::vector<int> sizes;
  std::vector<std::string> labels;
  int row = 0;
  for (int g : order) {
    y.segment(row, size(g)) = y_group(g);
    X.middleRows(row, size(g)) = X_group(g);
    Z.middleRows(row, size(g)) = Z_group(g);
    sizes.push_back(size(g));
    labels.push_back(labels_[static_cast<std::size_t>(g)]);
    row += size(g);
  }
  return GroupedDataset(std::move(y), std::move(X), std::move(Z), std::move(sizes),
                        std::move(labels));
}

Mat GroupedDataset::dense_Z() const {
  Mat out = Mat::Zero(n(), static_cast<Eigen::Index>(q()) * num_groups());
  for (int g = 0; g < num_groups(); ++g) {
    out.block(offset(g), g * q(), size(g), q()) = Z_group(g);
  }
  return out;
}

Mat CovStructure::psi(const Vec& theta) const {
  if (theta.size() != num_params()) {
    throw DimensionError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                         std::to_string(num_params()));
  }
  Mat out = Mat::Zero(q, q);
  for (int k = 0; k < q; ++k) {
    double v = theta(param_of(k));
    if (!std::isfinite(v)) throw InvalidParameter("non-finite theta");
    if (std::abs(v) < 1e-12) v = 0.0;
    if (v < 0.0) throw InvalidParameter("theta components must be nonnegative");
    out(k, k) = v;
  }
  return out;
}

void ModelParams::validate(int p) const {
  if (beta.size() != p) throw DimensionError("beta has wrong length");
  if (!std::isfinite(sigma2) || sigma2 <= 0.0) throw InvalidParameter("sigma2 must be positive");
  (void)cov.psi(theta);
}

ActiveSet::ActiveSet(std::vector<int> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (!indices_.empty() && indices_.front() < 0) throw DimensionError("negative index");
}

ActiveSet ActiveSet::from_beta(const Vec& beta, double zero_tol) {
  std::vector<int> idx;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::abs(beta(j)) > zero_tol) idx.push_back(static_cast<int>(j));
  }
  return ActiveSet(std::move(idx));
}

bool ActiveSet::contains(int j) const {
  return std::binary_search(indices_.begin(), indices_.end(), j);
}

int ActiveSet::intersection_size(const ActiveSet& other) const {
  int count = 0;
  for (int j : indices_) count += other.contains(j) ? 1 : 0;
  return count;
}

double signal_strength(const Vec& beta, const ActiveSet& support) {
  double m = std::numeric_limits<double>::infinity();
  for (int j : support.indices()) {
    if (beta(j) != 0.0) m = std::min(m, std::abs(beta(j)));
  }
  return std::isfinite(m) ? 0.5 * m : 0.0;
}

BlockDiag marginal_covariance(const GroupedDataset& ds, const Vec& theta, double sigma2,
                              const CovStructure& cov) {
  if (!std::isfinite(sigma2) || sigma2 <= 0.0) throw InvalidParameter("sigma2 must be positive");
  if (cov.q != ds.q()) throw DimensionError("covariance structure q does not match dataset");
  const Mat psi = cov.psi(theta);
  std::vector<Mat> blocks;
  blocks.reserve(static_cast<std::size_t>(ds.num_groups()));
  for (int g = 0; g < ds.num_groups(); ++g) {
    const auto Zg = ds.Z_group(g);
    Mat block = Zg * psi * Zg.transpose();
    block.diagonal().array() += sigma2;
    blocks.push_back(std::move(block));
  }
  return BlockDiag(std::move(blocks));
}

BlockDiag build_V(const GroupedDataset& ds, const ModelParams& params) {
  BlockDiag cov = marginal_covariance(ds, params.theta, params.sigma2, params.cov);
  std::vector<Mat> blocks = cov.blocks();
  for (auto& b : blocks) b /= params.sigma2;
  return BlockDiag(std::move(blocks));
}

double log_likelihood(const GroupedDataset& ds, const ModelParams& params) {
  params.validate(ds.p());
  const BlockDiag cov = marginal_covariance(ds, params.theta, params.sigma2, params.cov);
  const Vec resid = ds.y() - ds.X() * params.beta;
  double total = 0.0;
  for (int g = 0; g < ds.num_groups(); ++g) {
    Eigen::LLT<Mat> llt(cov.block(g));
    if (llt.info() != Eigen::Success) {
      throw ConditioningError("marginal covariance not positive definite in group " +
                                  std::to_string(g),
                              g);
    }
    const Vec r = resid.segment(ds.offset(g), ds.size(g));
    const Vec w = llt.matrixL().solve(r);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    total += -0.5 * (ds.size(g) * std::log(2.0 * std::numbers::pi) + logdet + w.squaredNorm());
  }
  return total;
}

double profile_quadratic(const GroupedDataset& ds, const Vec& beta, const BlockDiag& vtilde_inv) {
  if (beta.size() != ds.p()) throw DimensionError("beta has wrong length");
  if (vtilde_inv.dim() != ds.n() || vtilde_inv.num_blocks() != ds.num_groups()) {
    throw DimensionError("Vtilde^-1 does not match dataset blocks");
  }
  const Vec resid = ds.y() - ds.X() * beta;
  double total = 0.0;
  for (int g = 0; g < ds.num_groups(); ++g) {
    const auto r = resid.segment(ds.offset(g), ds.size(g));
    if (vtilde_inv.block(g).rows() != ds.size(g)) throw DimensionError("block size mismatch");
    total += r.dot(vtilde_inv.block(g) * r);
  }
  return std::max(total, 0.0);
}

}  // namespace pfgmm
