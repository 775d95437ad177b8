#include "pfgmm/proxy.hpp"

#include "pfgmm/error.hpp"
#include "pfgmm/matrix_kit.hpp"

#include <cmath>

namespace pfgmm {

Mat ProxySpec::matrix(int n, int q) const {
  if (kind == Kind::LogNIdentity) return std::log(static_cast<double>(n)) * Mat::Identity(q, q);
  if (custom.rows() != q || custom.cols() != q) {
    throw DimensionError("custom proxy matrix must be q x q");
  }
  if (!custom.allFinite()) throw InvalidParameter("custom proxy matrix has non-finite entries");
  const EigExtrema ext = eig_extrema(custom);
  if (ext.min < -1e-12 * std::max(1.0, std::abs(ext.max))) {
    throw ConditioningError("custom proxy matrix is not positive semi-definite", std::nullopt,
                            ext.min);
  }
  return custom;
}

ProxyTransform build_proxy_Vz(const GroupedDataset& ds, const ProxySpec& proxy) {
  ProxyTransform out;
  out.M = proxy.matrix(ds.n(), ds.q());
  std::vector<Mat> vz;
  std::vector<Mat> root;
  vz.reserve(static_cast<std::size_t>(ds.num_groups()));
  root.reserve(static_cast<std::size_t>(ds.num_groups()));
  for (int g = 0; g < ds.num_groups(); ++g) {
    const auto Zg = ds.Z_group(g);
    Mat block = Zg * out.M * Zg.transpose();
    block.diagonal().array() += 1.0;
    try {
      root.push_back(inv_sqrtm_spd(SpdBlock(block)).matrix());
    } catch (const ConditioningError& e) {
      throw ConditioningError(e.what(), g, e.min_eigenvalue());
    }
    vz.push_back(std::move(block));
  }
  out.vz = BlockDiag(std::move(vz));
  out.vz_invsqrt = BlockDiag(std::move(root));
  return out;
}

GroupedDataset ProxyTransform::transform(const GroupedDataset& ds) const {
  if (vz_invsqrt.dim() != ds.n()) throw DimensionError("proxy does not match dataset");
  return GroupedDataset(vz_invsqrt.apply(ds.y()), vz_invsqrt.apply(ds.X()), ds.Z(),
                        ds.group_sizes(), ds.group_labels());
}

}  // namespace pfgmm
