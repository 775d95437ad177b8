#pragma once

#include "pfgmm/sim.hpp"

#include <algorithm>

namespace fixture {

// The Example 2.1 design with fewer columns (and optionally more groups), keeping
// the leading coefficients.
inline pfgmm::SimConfig example(int p, int groups = 25) {
  pfgmm::SimConfig cfg = pfgmm::SimConfig::example21();
  const pfgmm::Vec full = cfg.beta0;
  const auto k = std::min<Eigen::Index>(p, full.size());
  cfg.p = p;
  cfg.I = groups;
  cfg.beta0 = pfgmm::Vec::Zero(p);
  cfg.beta0.head(k) = full.head(k);
  return cfg;
}

}  // namespace fixture
