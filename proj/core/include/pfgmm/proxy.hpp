#pragma once

#include "pfgmm/lmm.hpp"

namespace pfgmm {

// Proxy M for sigma^-2 Psi in Vtilde_i = I + Z_i M Z_i'.
struct ProxySpec {
  enum class Kind { LogNIdentity, Custom };
  Kind kind = Kind::LogNIdentity;
  Mat custom;  // q x q, used when kind == Custom

  static ProxySpec log_n() { return {}; }
  static ProxySpec from_matrix(Mat m) { return {Kind::Custom, std::move(m)}; }
  // M = 0, i.e. Vtilde = I.
  static ProxySpec identity(int q) { return from_matrix(Mat::Zero(q, q)); }

  // The q x q matrix for a dataset of n rows.
  Mat matrix(int n, int q) const;
};

struct ProxyTransform {
  Mat M;
  BlockDiag vz;          // Vtilde_i
  BlockDiag vz_invsqrt;  // Vtilde_i^{-1/2}

  // Whitened copy (Vtilde^{-1/2} y, Vtilde^{-1/2} X) keeping Z and the grouping.
  GroupedDataset transform(const GroupedDataset& ds) const;
};

ProxyTransform build_proxy_Vz(const GroupedDataset& ds, const ProxySpec& proxy);

}  // namespace pfgmm
