#pragma once

#include <Eigen/Dense>

#include <vector>

namespace pfgmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Block-diagonal n x n operator stored one dense block per group.
// Blocks are laid out along the diagonal in group order.
class BlockDiag {
 public:
  BlockDiag() = default;
  explicit BlockDiag(std::vector<Mat> blocks);

  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int dim() const { return dim_; }
  const Mat& block(int g) const { return blocks_[static_cast<std::size_t>(g)]; }
  const std::vector<Mat>& blocks() const { return blocks_; }

  // this * rhs, where rhs has dim() rows.
  Mat apply(const Mat& rhs) const;
  Vec apply(const Vec& rhs) const;

  // Dense n x n assembly; intended for small problems and tests.
  Mat dense() const;

 private:
  std::vector<Mat> blocks_;
  int dim_ = 0;
};

}  // namespace pfgmm
