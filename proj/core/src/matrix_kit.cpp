#include "pfgmm/matrix_kit.hpp"

#include "pfgmm/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfgmm {

BlockDiag::BlockDiag(std::vector<Mat> blocks) : blocks_(std::move(blocks)) {
  dim_ = 0;
  for (const auto& b : blocks_) {
    if (b.rows() != b.cols()) throw DimensionError("block-diagonal blocks must be square");
    dim_ += static_cast<int>(b.rows());
  }
}

Mat BlockDiag::apply(const Mat& rhs) const {
  if (rhs.rows() != dim_) throw DimensionError("block-diagonal apply: row mismatch");
  Mat out(rhs.rows(), rhs.cols());
  Eigen::Index row = 0;
  for (const auto& b : blocks_) {
    out.middleRows(row, b.rows()).noalias() = b * rhs.middleRows(row, b.rows());
    row += b.rows();
  }
  return out;
}

Vec BlockDiag::apply(const Vec& rhs) const {
  if (rhs.size() != dim_) throw DimensionError("block-diagonal apply: length mismatch");
  Vec out(rhs.size());
  Eigen::Index row = 0;
  for (const auto& b : blocks_) {
    out.segment(row, b.rows()).noalias() = b * rhs.segment(row, b.rows());
    row += b.rows();
  }
  return out;
}

Mat BlockDiag::dense() const {
  Mat out = Mat::Zero(dim_, dim_);
  Eigen::Index row = 0;
  for (const auto& b : blocks_) {
    out.block(row, row, b.rows(), b.cols()) = b;
    row += b.rows();
  }
  return out;
}

namespace {

double symmetry_defect(const Mat& A) {
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  return (A - A.transpose()).cwiseAbs().maxCoeff() / scale;
}

// Applies f to the spectrum of a symmetric positive definite matrix.
template <class F>
Mat spectral_apply(const Mat& A, F f) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  if (es.info() != Eigen::Success) throw ConditioningError("eigendecomposition failed");
  const Vec& w = es.eigenvalues();
  const Mat& U = es.eigenvectors();
  const Eigen::Index d = A.rows();
  Vec fw = w.unaryExpr(f);
  if (d <= kSqrtmBlockSize) {
    Mat out = U * fw.asDiagonal() * U.transpose();
    return 0.5 * (out + out.transpose());
  }
  // Panelled U diag(f) U' keeps the working set cache-sized for big blocks.
  Mat scaled = U * fw.asDiagonal();
  Mat out = Mat::Zero(d, d);
  for (Eigen::Index c = 0; c < d; c += kSqrtmBlockSize) {
    const Eigen::Index w_c = std::min<Eigen::Index>(kSqrtmBlockSize, d - c);
    out.noalias() += scaled.middleCols(c, w_c) * U.middleCols(c, w_c).transpose();
  }
  return 0.5 * (out + out.transpose());
}

}  // namespace

SpdBlock::SpdBlock(Mat data, double tolerance) : data_(std::move(data)), tolerance_(tolerance) {
  if (data_.rows() != data_.cols()) throw DimensionError("SpdBlock must be square");
  if (tolerance_ < 0.0) throw InvalidParameter("tolerance must be nonnegative");
  if (!data_.allFinite()) throw InvalidParameter("SpdBlock has non-finite entries");
  if (data_.size() == 0) return;
  if (symmetry_defect(data_) > tolerance_) {
    throw ConditioningError("matrix is not symmetric within tolerance");
  }
  const EigExtrema ext = eig_extrema(0.5 * (data_ + data_.transpose()), 1.0);
  if (!(ext.min > 0.0)) {
    std::ostringstream msg;
    msg << "matrix is not positive definite (min eigenvalue " << ext.min << ")";
    throw ConditioningError(msg.str(), std::nullopt, ext.min);
  }
}

SpdBlock sqrtm_spd(const SpdBlock& A) {
  if (A.dim() == 0) return A;
  return SpdBlock(spectral_apply(A.matrix(), [](double v) { return std::sqrt(v); }),
                  A.tolerance());
}

SpdBlock inv_sqrtm_spd(const SpdBlock& A) {
  if (A.dim() == 0) return A;
  return SpdBlock(spectral_apply(A.matrix(), [](double v) { return 1.0 / std::sqrt(v); }),
                  std::max(A.tolerance(), 1e-10));
}

EigExtrema eig_extrema(const Mat& A, double symmetry_tol) {
  if (A.rows() != A.cols()) throw DimensionError("eig_extrema needs a square matrix");
  if (A.size() == 0) return {};
  if (symmetry_defect(A) > symmetry_tol) throw InvalidParameter("eig_extrema: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConditioningError("eigendecomposition failed");
  return {es.eigenvalues()(0), es.eigenvalues()(A.rows() - 1)};
}

}  // namespace pfgmm
