#include "pfgmm/pfgmm.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pfgmm {

namespace {

bool is_constant_column(const Eigen::Ref<const Vec>& c) {
  const double lo = c.minCoeff();
  const double hi = c.maxCoeff();
  return hi - lo <= 1e-12 * std::max(1.0, std::abs(hi)) && std::abs(hi) > 0.0;
}

}  // namespace

InstrumentSet make_instruments(const GroupedDataset& ds, const BlockDiag& vz_invsqrt,
                               const InstrumentSource& source, double var_floor) {
  const Mat& raw = source.kind == InstrumentSource::Kind::ExternalW ? source.W : ds.X();
  if (raw.rows() != ds.n() || raw.cols() != ds.p()) {
    throw DimensionError("instrument matrix must be n x p");
  }
  if (!raw.allFinite()) throw InvalidParameter("instrument matrix has non-finite entries");
  const int p = ds.p();
  const double n = ds.n();

  InstrumentSet inst;
  inst.source = source.kind;
  inst.has_H.assign(static_cast<std::size_t>(p), 1);
  inst.centred_F.assign(static_cast<std::size_t>(p), 1);
  for (int j = 0; j < p; ++j) {
    if (is_constant_column(raw.col(j))) {
      if (inst.intercept >= 0) {
        throw InstrumentError("second constant column " + std::to_string(j + 1) +
                                  " duplicates the intercept",
                              j);
      }
      inst.intercept = j;
      inst.has_H[static_cast<std::size_t>(j)] = 0;
      inst.centred_F[static_cast<std::size_t>(j)] = 0;
    }
  }

  const Mat W = vz_invsqrt.apply(raw);
  inst.F_star = W;
  inst.H_star = W.array().square().matrix();
  for (int j = 0; j < p; ++j) {
    auto f = inst.F_star.col(j);
    auto h = inst.H_star.col(j);
    double vf = 0.0;
    if (inst.centred_F[static_cast<std::size_t>(j)]) {
      f.array() -= f.mean();
      vf = f.squaredNorm() / n;
    } else {
      vf = f.squaredNorm() / n;
    }
    if (!(vf > var_floor)) {
      throw InstrumentError("instrument column " + std::to_string(j + 1) + " is degenerate", j);
    }
    if (inst.has_H[static_cast<std::size_t>(j)]) {
      h.array() -= h.mean();
      if (!(h.squaredNorm() / n > var_floor)) {
        throw InstrumentError("squared instrument column " + std::to_string(j + 1) +
                                  " is degenerate",
                              j);
      }
    } else {
      h.setZero();
    }
  }
  return inst;
}

GmmWeights gmm_weights(const InstrumentSet& inst) {
  const double n = static_cast<double>(inst.F_star.rows());
  GmmWeights w{Vec::Zero(inst.p()), Vec::Zero(inst.p())};
  for (int j = 0; j < inst.p(); ++j) {
    w.wF(j) = n / inst.F_star.col(j).squaredNorm();
    if (inst.has_H[static_cast<std::size_t>(j)]) w.wH(j) = n / inst.H_star.col(j).squaredNorm();
  }
  return w;
}

PfgmmProblem::PfgmmProblem(const GroupedDataset& transformed, InstrumentSet inst, GmmWeights w,
                           std::vector<int> forced)
    : X_(transformed.X()), y_(transformed.y()), inst_(std::move(inst)), w_(std::move(w)),
      forced_(std::move(forced)) {
  if (inst_.F_star.rows() != n() || inst_.F_star.cols() != p() || inst_.H_star.rows() != n() ||
      inst_.H_star.cols() != p()) {
    throw DimensionError("instruments do not match the transformed design");
  }
  if (w_.wF.size() != p() || w_.wH.size() != p()) throw DimensionError("weights have wrong length");
  std::sort(forced_.begin(), forced_.end());
  forced_.erase(std::unique(forced_.begin(), forced_.end()), forced_.end());
  forced_mask_.assign(static_cast<std::size_t>(p()), 0);
  for (int j : forced_) {
    if (j < 0 || j >= p()) throw InvalidParameter("forced index out of range");
    forced_mask_[static_cast<std::size_t>(j)] = 1;
  }
  CF_ = inst_.F_star.transpose() * X_ / static_cast<double>(n());
  CH_ = inst_.H_star.transpose() * X_ / static_cast<double>(n());
}

std::vector<int> PfgmmProblem::moment_support(const Vec& beta) const {
  std::vector<int> out;
  for (int j = 0; j < p(); ++j) {
    if (beta(j) != 0.0 || forced_mask_[static_cast<std::size_t>(j)]) out.push_back(j);
  }
  return out;
}

double PfgmmProblem::restricted_loss(const Vec& beta, const std::vector<int>& support) const {
  if (beta.size() != p()) throw DimensionError("beta has wrong length");
  const Vec r = y_ - X_ * beta;
  const double n_d = n();
  double total = 0.0;
  for (int j : support) {
    const double vf = inst_.F_star.col(j).dot(r) / n_d;
    const double vh = inst_.H_star.col(j).dot(r) / n_d;
    total += w_.wF(j) * vf * vf + w_.wH(j) * vh * vh;
  }
  return total;
}

double PfgmmProblem::loss(const Vec& beta) const { return restricted_loss(beta, moment_support(beta)); }

Vec PfgmmProblem::restricted_gradient(const Vec& beta, const std::vector<int>& support) const {
  if (beta.size() != p()) throw DimensionError("beta has wrong length");
  const Vec r = y_ - X_ * beta;
  const double n_d = n();
  Vec grad = Vec::Zero(p());
  for (int j : support) {
    const double vf = inst_.F_star.col(j).dot(r) / n_d;
    const double vh = inst_.H_star.col(j).dot(r) / n_d;
    grad.noalias() -= 2.0 * w_.wF(j) * vf * CF_.row(j).transpose();
    grad.noalias() -= 2.0 * w_.wH(j) * vh * CH_.row(j).transpose();
  }
  return grad;
}

double PfgmmProblem::objective(const Vec& beta, const PenaltySpec& pen) const {
  double total = loss(beta);
  for (int j = 0; j < p(); ++j) {
    if (!forced_mask_[static_cast<std::size_t>(j)] && beta(j) != 0.0) {
      total += pen_value(pen, std::abs(beta(j)));
    }
  }
  return total;
}

double pfgmm_loss(const GroupedDataset& transformed, const Vec& beta, const InstrumentSet& inst,
                  const GmmWeights& w) {
  return PfgmmProblem(transformed, inst, w).loss(beta);
}

namespace {

struct SweepResult {
  int sweeps = 0;
  bool converged = false;
};

// Cyclic coordinate descent on Q_n. Coordinates with allowed[j] == 0 are held fixed
// (used to re-fit a support after a coordinate has been dropped).
SweepResult coordinate_sweeps(const PfgmmProblem& prob, const PenaltySpec& pen, Vec& beta,
                              const std::vector<char>& forced, const std::vector<char>* allowed,
                              const PfgmmOptions& opts, int max_sweeps,
                              std::vector<double>* trace) {
  const int p = prob.p();
  const Mat& CF = prob.cross_F();
  const Mat& CH = prob.cross_H();
  const Vec& wF = prob.weights().wF;
  const Vec& wH = prob.weights().wH;

  // Current moments n^-1 F' r and n^-1 H' r for every column.
  const Vec r0 = prob.y() - prob.X() * beta;
  Vec mF = prob.instruments().F_star.transpose() * r0 / static_cast<double>(prob.n());
  Vec mH = prob.instruments().H_star.transpose() * r0 / static_cast<double>(prob.n());

  SweepResult out;
  std::vector<int> support = prob.moment_support(beta);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_step = 0.0;
    bool support_changed = false;
    for (int j = 0; j < p; ++j) {
      if (allowed != nullptr && !(*allowed)[static_cast<std::size_t>(j)]) continue;
      const double old = beta(j);
      const bool in_support = old != 0.0 || forced[static_cast<std::size_t>(j)];
      // Loss over support + {j} as A t^2 - 2 B t + C in t = beta_j.
      double A = 0.0, B = 0.0, C = 0.0;
      auto accumulate = [&](int k) {
        const double cf = CF(k, j);
        const double ch = CH(k, j);
        const double gf = mF(k) + old * cf;
        const double gh = mH(k) + old * ch;
        A += wF(k) * cf * cf + wH(k) * ch * ch;
        B += wF(k) * gf * cf + wH(k) * gh * ch;
        C += wF(k) * gf * gf + wH(k) * gh * gh;
      };
      for (int k : support) {
        if (k != j) accumulate(k);
      }
      const double zero_value = C;
      accumulate(j);

      double next = 0.0;
      if (forced[static_cast<std::size_t>(j)]) {
        next = A > 0.0 ? B / A : old;
      } else if (A > 0.0) {
        const ScalarMinimum m = minimize_penalized_quadratic(pen, A, -2.0 * B, 1.0);
        if (m.t != 0.0 && m.value + C < zero_value - opts.tie_tol) next = m.t;
      }
      if (next != old) {
        const double delta = next - old;
        mF.noalias() -= delta * CF.col(j);
        mH.noalias() -= delta * CH.col(j);
        beta(j) = next;
        max_step = std::max(max_step, std::abs(delta));
        const bool now_in = next != 0.0 || forced[static_cast<std::size_t>(j)];
        if (now_in != in_support) {
          support_changed = true;
          support = prob.moment_support(beta);
        }
      }
    }
    if (trace != nullptr) trace->push_back(prob.objective(beta, pen));
    out.sweeps = sweep;
    if (!support_changed && max_step < opts.step_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

FitResult fit_pfgmm_problem(const PfgmmProblem& prob, const PenaltySpec& pen, Vec beta,
                            const PfgmmOptions& opts) {
  pen.validate();
  const int p = prob.p();
  if (beta.size() != p) throw DimensionError("starting beta has wrong length");
  std::vector<char> forced(static_cast<std::size_t>(p), 0);
  for (int j : prob.forced()) forced[static_cast<std::size_t>(j)] = 1;

  FitResult out;
  out.lambda = pen.lambda;
  SweepResult sweeps = coordinate_sweeps(prob, pen, beta, forced, nullptr, opts, opts.max_sweeps,
                                         &out.trace);
  out.iterations = sweeps.sweeps;

  // Single-coordinate moves cannot leave a support where several small coefficients
  // jointly absorb the error: each one alone is worth keeping. Try dropping one
  // small coefficient at a time, re-fitting the rest of the support, and keep the
  // first drop that lowers Q_n. The mirror image also happens: a missing column whose
  // moments are badly violated looks worse on its own than left out, until the rest
  // of the support is re-fitted with it.
  double current = prob.objective(beta, pen);
  auto refit = [&](Vec& trial, const std::vector<char>& hold) {
    std::vector<char> allowed(static_cast<std::size_t>(p), 0);
    for (int k = 0; k < p; ++k) {
      allowed[static_cast<std::size_t>(k)] = trial(k) != 0.0 || forced[static_cast<std::size_t>(k)];
    }
    coordinate_sweeps(prob, pen, trial, hold, &allowed, opts, opts.max_sweeps, nullptr);
    if (&hold != &forced) {
      coordinate_sweeps(prob, pen, trial, forced, &allowed, opts, opts.max_sweeps, nullptr);
    }
    return prob.objective(trial, pen);
  };
  auto try_drop = [&]() {
    std::vector<int> candidates;
    for (int j = 0; j < p; ++j) {
      if (forced[static_cast<std::size_t>(j)] || beta(j) == 0.0) continue;
      // Locally only coefficients where the penalty is still rising; past that point
      // the coefficient is clearly selected and a drop is not a local move.
      if (opts.search == PfgmmOptions::Search::Local && !(pen_deriv(pen, std::abs(beta(j))) > 0.0)) {
        continue;
      }
      candidates.push_back(j);
    }
    std::sort(candidates.begin(), candidates.end(),
              [&](int a, int b) { return std::abs(beta(a)) < std::abs(beta(b)); });
    for (int j : candidates) {
      Vec trial = beta;
      trial(j) = 0.0;
      if (refit(trial, forced) < current - opts.tie_tol) {
        beta = std::move(trial);
        return true;
      }
    }
    return false;
  };
  auto try_add = [&]() {
    const std::vector<int> support = prob.moment_support(beta);
    const Mat& CF = prob.cross_F();
    const Mat& CH = prob.cross_H();
    const Vec r = prob.y() - prob.X() * beta;
    const Vec mF = prob.instruments().F_star.transpose() * r / static_cast<double>(prob.n());
    const Vec mH = prob.instruments().H_star.transpose() * r / static_cast<double>(prob.n());
    const Vec& wF = prob.weights().wF;
    const Vec& wH = prob.weights().wH;
    // Zero columns ordered by how strongly their own moments are violated.
    std::vector<std::pair<double, int>> candidates;
    for (int j = 0; j < p; ++j) {
      if (beta(j) != 0.0 || forced[static_cast<std::size_t>(j)]) continue;
      candidates.emplace_back(wF(j) * mF(j) * mF(j) + wH(j) * mH(j) * mH(j), j);
    }
    std::sort(candidates.begin(), candidates.end(), std::greater<>());
    for (const auto& [violation, j] : candidates) {
      if (!(violation > opts.tie_tol)) break;
      // Least-squares value of beta_j over the moments of support + {j}.
      double A = 0.0, B = 0.0;
      auto accumulate = [&](int k) {
        A += wF(k) * CF(k, j) * CF(k, j) + wH(k) * CH(k, j) * CH(k, j);
        B += wF(k) * mF(k) * CF(k, j) + wH(k) * mH(k) * CH(k, j);
      };
      for (int k : support) accumulate(k);
      accumulate(j);
      if (!(A > 0.0) || B == 0.0) continue;
      Vec trial = beta;
      trial(j) = B / A;
      std::vector<char> hold = forced;
      hold[static_cast<std::size_t>(j)] = 1;
      if (refit(trial, hold) < current - opts.tie_tol) {
        beta = std::move(trial);
        return true;
      }
    }
    return false;
  };
  for (int round = 0; round < 2 * p && (opts.drop_search || opts.add_search); ++round) {
    const bool improved = (opts.drop_search && try_drop()) || (opts.add_search && try_add());
    if (!improved) break;
    sweeps = coordinate_sweeps(prob, pen, beta, forced, nullptr, opts, opts.max_sweeps, &out.trace);
    out.iterations += sweeps.sweeps;
    current = prob.objective(beta, pen);
  }
  out.converged = sweeps.converged;

  for (int j = 0; j < p; ++j) {
    if (!forced[static_cast<std::size_t>(j)] && std::abs(beta(j)) <= opts.zero_tol) beta(j) = 0.0;
  }
  out.objective = prob.objective(beta, pen);
  const std::vector<int> final_support = prob.moment_support(beta);
  const Vec grad = prob.restricted_gradient(beta, final_support);
  double kkt = 0.0;
  for (int j : final_support) {
    double v = std::abs(grad(j));
    if (!forced[static_cast<std::size_t>(j)] && beta(j) != 0.0) {
      v = std::abs(grad(j) + std::copysign(pen_deriv(pen, std::abs(beta(j))), beta(j)));
    }
    kkt = std::max(kkt, v);
  }
  out.kkt_residual = kkt;
  out.active_set = ActiveSet::from_beta(beta, opts.zero_tol);
  out.beta_hat = std::move(beta);
  return out;
}

PfgmmSetup prepare_pfgmm(const GroupedDataset& ds, const ProxySpec& proxy,
                         const PfgmmOptions& opts) {
  ProxyTransform tr = build_proxy_Vz(ds, proxy);
  GroupedDataset transformed = tr.transform(ds);
  InstrumentSet inst = make_instruments(ds, tr.vz_invsqrt, opts.instruments);
  GmmWeights w = gmm_weights(inst);
  PfgmmProblem prob(transformed, std::move(inst), std::move(w), opts.unpenalized);
  return PfgmmSetup{std::move(tr), std::move(transformed), std::move(prob)};
}

Vec pfgmm_start(const PfgmmSetup& setup, const PenaltySpec& pen, const PfgmmOptions& opts) {
  if (opts.init == PfgmmOptions::Init::Zero) return Vec::Zero(setup.problem.p());
  FitOptions pls_opts;
  pls_opts.unpenalized = opts.unpenalized;
  pls_opts.max_iter = opts.max_sweeps;
  return fit_pls_transformed(setup.transformed, pen, pls_opts).beta_hat;
}

FitResult fit_pfgmm(const GroupedDataset& ds, const PenaltySpec& pen, const ProxySpec& proxy,
                    const PfgmmOptions& opts) {
  const PfgmmSetup setup = prepare_pfgmm(ds, proxy, opts);
  return fit_pfgmm_problem(setup.problem, pen, pfgmm_start(setup, pen, opts), opts);
}

}  // namespace pfgmm
