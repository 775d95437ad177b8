#include "pfgmm/sim.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfgmm {

EndoSet EndoSet::set(int k) {
  if (k < 1 || k > 4) throw InvalidParameter("endogenous set must be 1..4");
  return {static_cast<Tag>(k - 1), {}};
}

EndoSet EndoSet::from_list(std::vector<int> one_based) {
  for (int j : one_based) {
    if (j < 1) throw InvalidParameter("endogenous column indices are 1-based");
  }
  std::sort(one_based.begin(), one_based.end());
  one_based.erase(std::unique(one_based.begin(), one_based.end()), one_based.end());
  return {Tag::Custom, std::move(one_based)};
}

EndoSet EndoSet::parse(std::string_view text) {
  if (text.size() == 4 && text.substr(0, 3) == "set" && text[3] >= '1' && text[3] <= '4') {
    return set(text[3] - '0');
  }
  std::vector<int> cols;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      cols.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse endogenous set '" + std::string(text) + "'");
    }
  }
  if (cols.empty()) throw ConfigError("empty endogenous set");
  return from_list(std::move(cols));
}

std::vector<int> EndoSet::columns(int p) const {
  std::vector<int> one_based;
  switch (tag) {
    case Tag::Set1: for (int j = 6; j <= 15; ++j) one_based.push_back(j); break;
    case Tag::Set2: for (int j = 5; j <= 15; ++j) one_based.push_back(j); break;
    case Tag::Set3:
      one_based.push_back(2);
      for (int j = 6; j <= 15; ++j) one_based.push_back(j);
      break;
    case Tag::Set4: for (int j = 6; j <= p; ++j) one_based.push_back(j); break;
    case Tag::Custom: one_based = custom; break;
  }
  std::vector<int> out;
  for (int j : one_based) {
    if (j < 1 || j > p) {
      throw InvalidParameter("endogenous column " + std::to_string(j) + " outside 1.." +
                             std::to_string(p));
    }
    out.push_back(j - 1);
  }
  return out;
}

std::string EndoSet::name() const {
  if (tag != Tag::Custom) return "set" + std::to_string(static_cast<int>(tag) + 1);
  std::string out;
  for (std::size_t k = 0; k < custom.size(); ++k) {
    if (k > 0) out += ",";
    out += std::to_string(custom[k]);
  }
  return out;
}

std::string Endogeneity::name() const {
  std::ostringstream out;
  switch (kind) {
    case EndoKind::None: return "none";
    case EndoKind::Level1: out << "level1"; break;
    case EndoKind::Level2Intercept: out << "level2-intercept"; break;
    case EndoKind::Level2Slope: out << "level2-slope"; break;
  }
  out << ":" << set.name() << ":" << strength;
  return out.str();
}

SimConfig SimConfig::example21() {
  SimConfig cfg;
  cfg.beta0 = Vec::Zero(cfg.p);
  cfg.beta0.head(5) << 1.0, 2.0, 4.0, 3.0, 3.0;
  cfg.theta0 = Vec::Constant(cfg.q, 0.56);
  return cfg;
}

int SimConfig::s() const {
  int count = 0;
  for (Eigen::Index j = 0; j < beta0.size(); ++j) count += beta0(j) != 0.0 ? 1 : 0;
  return count;
}

void SimConfig::validate() const {
  if (I < 1 || n_i < 1) throw ConfigError("need I >= 1 and n_i >= 1");
  if (p < 2) throw ConfigError("need p >= 2 (intercept plus covariates)");
  if (q < 0 || q > p) throw ConfigError("q must lie in 0..p");
  if (beta0.size() != p) throw ConfigError("beta0 must have p entries");
  if (theta0.size() != q) throw ConfigError("theta0 must have q entries");
  if ((theta0.array() < 0.0).any()) throw ConfigError("theta0 entries are variances, must be >= 0");
  if (!(sigma2_0 > 0.0)) throw ConfigError("sigma2 must be positive");
  if (!(std::abs(rho) < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
  if (reps < 1) throw ConfigError("reps must be >= 1");
  if (endo.kind != EndoKind::None) {
    (void)endo.set.columns(p);
    if (endo.kind == EndoKind::Level2Intercept && q < 1) throw ConfigError("no random intercept");
    if (endo.kind == EndoKind::Level2Slope && q < 2) throw ConfigError("no random slope");
  }
}

std::mt19937_64 rep_engine(std::uint64_t seed, int rep, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

Mat inject_level1(const Mat& X, const Vec& eps, double rho_e, const std::vector<int>& columns) {
  if (eps.size() != X.rows()) throw DimensionError("eps length must equal the number of rows");
  Mat out = X;
  if (rho_e == 0.0) return out;
  const Vec factor = (rho_e * eps).array() + 1.0;
  for (int j : columns) {
    if (j < 0 || j >= X.cols()) throw InvalidParameter("endogenous column out of range");
    out.col(j) = ((X.col(j).array() + 1.0) * factor.array()).matrix();
  }
  return out;
}

Mat inject_level2(const Mat& X, const std::vector<int>& group_sizes, const std::vector<Vec>& b,
                  int k, double rho_b, const std::vector<int>& columns) {
  if (b.size() != group_sizes.size()) throw DimensionError("one random effect per group required");
  Mat out = X;
  if (rho_b == 0.0) return out;
  int row = 0;
  for (std::size_t g = 0; g < group_sizes.size(); ++g) {
    if (k < 0 || k >= b[g].size()) throw InvalidParameter("random effect index out of range");
    const double factor = rho_b * b[g](k) + 1.0;
    for (int j : columns) {
      if (j < 0 || j >= X.cols()) throw InvalidParameter("endogenous column out of range");
      out.col(j).segment(row, group_sizes[g]) =
          ((X.col(j).segment(row, group_sizes[g]).array() + 1.0) * factor).matrix();
    }
    row += group_sizes[g];
  }
  if (row != X.rows()) throw DimensionError("group sizes do not cover X");
  return out;
}

namespace {

GroupedDataset assemble(Mat X, const std::vector<int>& sizes, const SimTruth& truth, int q,
                        const std::vector<std::string>& labels = {}) {
  Mat Z = X.leftCols(q);
  Vec y = X * truth.params.beta + truth.eps;
  int row = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    y.segment(row, sizes[g]).noalias() += Z.middleRows(row, sizes[g]) * truth.b[g];
    row += sizes[g];
  }
  return GroupedDataset(std::move(y), std::move(X), std::move(Z), sizes, labels);
}

}  // namespace

GroupedDataset inject_level1(const GroupedDataset& ds, const SimTruth& truth, double rho_e,
                             const EndoSet& set) {
  Mat X = inject_level1(ds.X(), truth.eps, rho_e, set.columns(ds.p()));
  return assemble(std::move(X), ds.group_sizes(), truth, ds.q(), ds.group_labels());
}

GroupedDataset inject_level2(const GroupedDataset& ds, const SimTruth& truth, double rho_b,
                             const EndoSet& set, EndoKind which) {
  int k = 0;
  if (which == EndoKind::Level2Intercept) {
    k = 0;
  } else if (which == EndoKind::Level2Slope) {
    k = 1;
  } else {
    throw InvalidParameter("inject_level2 needs an intercept or slope target");
  }
  Mat X = inject_level2(ds.X(), ds.group_sizes(), truth.b, k, rho_b, set.columns(ds.p()));
  return assemble(std::move(X), ds.group_sizes(), truth, ds.q(), ds.group_labels());
}

SimDraw generate(const SimConfig& cfg, int rep) {
  cfg.validate();
  std::mt19937_64 eng = rep_engine(cfg.seed, rep);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = cfg.n();
  const double tail = std::sqrt(1.0 - cfg.rho * cfg.rho);

  // Columns 2..p are AR(1) across the column index: this is the Cholesky
  // factor of rho^|i-j| applied row by row.
  Mat X(n, cfg.p);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    double prev = normal(eng);
    X(i, 1) = prev;
    for (int j = 2; j < cfg.p; ++j) {
      prev = cfg.rho * prev + tail * normal(eng);
      X(i, j) = prev;
    }
  }
  SimTruth truth;
  truth.b.reserve(static_cast<std::size_t>(cfg.I));
  for (int g = 0; g < cfg.I; ++g) {
    Vec b(cfg.q);
    for (int k = 0; k < cfg.q; ++k) b(k) = std::sqrt(cfg.theta0(k)) * normal(eng);
    truth.b.push_back(std::move(b));
  }
  truth.eps.resize(n);
  const double sd = std::sqrt(cfg.sigma2_0);
  for (int i = 0; i < n; ++i) truth.eps(i) = sd * normal(eng);
  truth.params = ModelParams{cfg.beta0, cfg.theta0, cfg.sigma2_0, CovStructure::diagonal(cfg.q)};
  truth.support = ActiveSet::from_beta(cfg.beta0, 0.0);

  const std::vector<int> sizes(static_cast<std::size_t>(cfg.I), cfg.n_i);
  switch (cfg.endo.kind) {
    case EndoKind::None: break;
    case EndoKind::Level1:
      X = inject_level1(X, truth.eps, cfg.endo.strength, cfg.endo.set.columns(cfg.p));
      break;
    case EndoKind::Level2Intercept:
      X = inject_level2(X, sizes, truth.b, 0, cfg.endo.strength, cfg.endo.set.columns(cfg.p));
      break;
    case EndoKind::Level2Slope:
      X = inject_level2(X, sizes, truth.b, 1, cfg.endo.strength, cfg.endo.set.columns(cfg.p));
      break;
  }
  GroupedDataset data = assemble(std::move(X), sizes, truth, cfg.q);
  return {std::move(data), std::move(truth)};
}

double injected_correlation(double rho, double sd) {
  return rho * sd / std::sqrt(2.0 * rho * rho * sd * sd + 1.0);
}

}  // namespace pfgmm
