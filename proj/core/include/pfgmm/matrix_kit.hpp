#pragma once

#include "pfgmm/linalg.hpp"

namespace pfgmm {

// Symmetric positive definite block, validated on construction.
// Symmetry is checked relative to the largest entry; positive definiteness
// through the smallest eigenvalue.
class SpdBlock {
 public:
  explicit SpdBlock(Mat data, double tolerance = 1e-10);

  const Mat& matrix() const { return data_; }
  double tolerance() const { return tolerance_; }
  int dim() const { return static_cast<int>(data_.rows()); }

 private:
  Mat data_;
  double tolerance_;
};

// Principal square root S (S S = A, S symmetric positive definite).
SpdBlock sqrtm_spd(const SpdBlock& A);

// Principal square root of A^{-1}.
SpdBlock inv_sqrtm_spd(const SpdBlock& A);

struct EigExtrema {
  double min = 0.0;
  double max = 0.0;
};

// Smallest and largest eigenvalue of a symmetric matrix.
EigExtrema eig_extrema(const Mat& A, double symmetry_tol = 1e-10);

// Block size above which the root is computed blockwise over the
// eigendecomposition; purely a cache consideration.
inline constexpr int kSqrtmBlockSize = 64;

}  // namespace pfgmm
