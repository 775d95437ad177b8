#include "pfgmm/runner.hpp"

#include "pfgmm/csv.hpp"
#include "pfgmm/error.hpp"

#include <ceres/version.h>
#include <json.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#ifndef PFGMM_VERSION
#define PFGMM_VERSION "unknown"
#endif

namespace pfgmm {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return std::isnan(v) ? "NA" : format_double(v); }

std::ofstream create(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

// A column of the summary tables, read from one Moments.
struct StatColumn {
  std::string name;
  std::function<Moments(const Aggregate&)> get;
  bool has_mse = true;
};

std::vector<StatColumn> selection_columns() {
  return {{"S_size", [](const Aggregate& a) { return a.active_size; }, false},
          {"TP", [](const Aggregate& a) { return a.true_positives; }, false},
          {"PE", [](const Aggregate& a) { return a.pe; }, false}};
}

std::vector<StatColumn> coef_columns(int k) {
  std::vector<StatColumn> cols;
  for (int j = 0; j < k; ++j) {
    cols.push_back({"beta_" + std::to_string(j + 1), [j](const Aggregate& a) {
                      return j < static_cast<int>(a.coefs.size()) ? a.coefs[static_cast<std::size_t>(j)]
                                                                   : Moments{NAN, NAN, NAN};
                    }});
  }
  cols.push_back({"beta_N", [](const Aggregate& a) { return a.beta_N; }});
  return cols;
}

std::vector<StatColumn> variance_columns(int q, bool sigma_first) {
  std::vector<StatColumn> cols;
  const StatColumn sig{"sigma2", [](const Aggregate& a) { return a.sigma2; }};
  if (sigma_first) cols.push_back(sig);
  for (int t = 0; t < q; ++t) {
    cols.push_back({"theta" + std::to_string(t + 1), [t](const Aggregate& a) {
                      return t < static_cast<int>(a.theta.size()) ? a.theta[static_cast<std::size_t>(t)]
                                                                  : Moments{NAN, NAN, NAN};
                    }});
  }
  if (!sigma_first) cols.push_back(sig);
  return cols;
}

void write_stat_header(std::ostream& out, const std::vector<std::string>& lead,
                       const std::vector<StatColumn>& cols) {
  for (const auto& l : lead) out << l << ',';
  out << "stat";
  for (const auto& c : cols) out << ',' << c.name;
  out << '\n';
}

void write_stat_rows(std::ostream& out, const std::vector<std::string>& lead,
                     const std::vector<StatColumn>& cols, const Aggregate& agg) {
  const char* names[] = {"mean", "sd", "mse"};
  for (int r = 0; r < 3; ++r) {
    for (const auto& l : lead) out << l << ',';
    out << names[r];
    for (const auto& c : cols) {
      const Moments m = c.get(agg);
      const double v = r == 0 ? m.mean : r == 1 ? m.sd : (c.has_mse ? m.mse : NAN);
      out << ',' << num(v);
    }
    out << '\n';
  }
}

std::string method_label(Estimator e) {
  switch (e) {
    case Estimator::Mple: return "MPLE";
    case Estimator::Pls: return "PLS";
    case Estimator::Pfgmm: return "PFGMM";
    case Estimator::Pfgmm2Mle: return "2MLE";
    case Estimator::Pfgmm2Reml: return "2REML";
  }
  return "?";
}

std::string endo_label(EndoKind k) {
  switch (k) {
    case EndoKind::None: return "none";
    case EndoKind::Level1: return "level1";
    case EndoKind::Level2Intercept: return "level2-intercept";
    case EndoKind::Level2Slope: return "level2-slope";
  }
  return "?";
}

// One cell of a benchmark: a configuration, its label columns and its result.
struct Cell {
  std::vector<std::string> labels;
  StudyConfig config;
  StudyResult result;
};

Endogeneity endo(EndoKind kind, int set, double strength) {
  Endogeneity e;
  e.kind = kind;
  e.set = EndoSet::set(set);
  e.strength = strength;
  return e;
}

std::vector<Cell> bench_cells(const RunConfig& cfg, std::vector<std::string>& label_names) {
  std::vector<Cell> cells;
  auto add = [&](std::vector<std::string> labels, Estimator est, Endogeneity e,
                 std::optional<double> rho = std::nullopt) {
    StudyConfig sc = cfg.study_for(est);
    sc.sim.endo = std::move(e);
    if (rho) sc.sim.rho = *rho;
    cells.push_back({std::move(labels), std::move(sc), {}});
  };
  const double s = cfg.bench_strength;
  const Estimator second_stage[] = {Estimator::Pls, Estimator::Pfgmm, Estimator::Pfgmm2Mle,
                                    Estimator::Pfgmm2Reml};
  switch (cfg.bench) {
    case Bench::Table1:
      label_names = {"endogeneity", "covariates"};
      add({"none", "none"}, Estimator::Mple, Endogeneity{});
      for (EndoKind k : {EndoKind::Level1, EndoKind::Level2Intercept, EndoKind::Level2Slope}) {
        for (int set = 1; set <= 4; ++set) {
          add({endo_label(k), "set" + std::to_string(set)}, Estimator::Mple, endo(k, set, s));
        }
      }
      break;
    case Bench::Table2:
      label_names = {"method"};
      for (Estimator e : second_stage) add({method_label(e)}, e, Endogeneity{});
      break;
    case Bench::Table3:
      label_names = {"covariates", "method"};
      for (int set = 1; set <= 4; ++set) {
        for (Estimator e : second_stage) {
          add({"set" + std::to_string(set), method_label(e)}, e, endo(EndoKind::Level1, set, s));
        }
      }
      break;
    case Bench::Fig1:
    case Bench::Fig2:
    case Bench::Fig3:
    case Bench::Fig4: {
      label_names = {"covariates", "strength", "estimator"};
      const EndoKind kind = cfg.bench == Bench::Fig3   ? EndoKind::Level2Intercept
                            : cfg.bench == Bench::Fig4 ? EndoKind::Level2Slope
                                                       : EndoKind::Level1;
      const double rho = cfg.bench == Bench::Fig2 ? 0.0 : 0.5;
      for (int set = 1; set <= 4; ++set) {
        for (double st : cfg.bench_strengths) {
          for (Estimator e : {Estimator::Pfgmm, Estimator::Pls}) {
            const Endogeneity en = st == 0.0 ? Endogeneity{} : endo(kind, set, st);
            add({"set" + std::to_string(set), format_double(st), method_label(e)}, e, en, rho);
          }
        }
      }
      break;
    }
  }
  return cells;
}

std::vector<StatColumn> table_columns(Bench b, int k, int q) {
  std::vector<StatColumn> cols;
  if (b == Bench::Table1) {
    cols = selection_columns();
    for (auto& c : coef_columns(k)) cols.push_back(std::move(c));
    for (auto& c : variance_columns(q, true)) cols.push_back(std::move(c));
  } else {
    cols = coef_columns(k);
    for (auto& c : variance_columns(q, false)) cols.push_back(std::move(c));
  }
  return cols;
}

void write_figure_csv(std::ostream& out, const std::vector<std::string>& label_names,
                      const std::vector<Cell>& cells) {
  for (const auto& l : label_names) out << l << ',';
  out << "S_mean,S_sd,S_se,TP_mean,PE_mean,reps_ok,reps_failed\n";
  for (const Cell& c : cells) {
    for (const auto& l : c.labels) out << l << ',';
    const Aggregate& a = c.result.summary;
    const double se = a.reps_ok > 0 ? a.active_size.sd / std::sqrt(double(a.reps_ok)) : NAN;
    out << num(a.active_size.mean) << ',' << num(a.active_size.sd) << ',' << num(se) << ','
        << num(a.true_positives.mean) << ',' << num(a.pe.mean) << ',' << a.reps_ok << ','
        << a.reps_failed << '\n';
  }
}

// Puts instrument rows in the stacked (grouped) order of the data.
Mat reorder_rows(const Mat& W, const std::vector<int>& order, const std::string& path) {
  if (W.rows() != static_cast<Eigen::Index>(order.size())) {
    throw DataError("instrument file " + path + " has " + std::to_string(W.rows()) +
                    " rows, data has " + std::to_string(order.size()));
  }
  Mat out(W.rows(), W.cols());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = W.row(order[r]);
  }
  return out;
}

ProxySpec resolve_proxy(const std::string& text, int q) {
  if (text == "logn") return ProxySpec::log_n();
  const std::string path = text.substr(std::string("custom:").size());
  Mat M = read_matrix_csv(path);
  if (M.rows() != q || M.cols() != q) {
    throw DataError("proxy matrix " + path + " must be " + std::to_string(q) + " x " +
                    std::to_string(q));
  }
  return ProxySpec::from_matrix(std::move(M));
}

nlohmann::json to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::isnan(v(k))) {
      a.push_back(nullptr);
    } else {
      a.push_back(v(k));
    }
  }
  return a;
}

bool all_failed(const std::vector<Cell>& cells) {
  for (const Cell& c : cells) {
    if (c.result.summary.reps_ok == 0) return true;
  }
  return false;
}

void report_failures(const std::vector<RepSummary>& reps, std::string& message) {
  int failed = 0;
  std::string first;
  for (const auto& r : reps) {
    if (r.ok) continue;
    if (failed++ == 0) first = r.error;
  }
  if (failed > 0) {
    message += std::to_string(failed) + " replication(s) failed; first: " + first + "\n";
  }
}

}  // namespace

void write_reps_header(std::ostream& out, int report_coefs, int q,
                       const std::vector<std::string>& lead) {
  for (const auto& l : lead) out << l << ',';
  out << "rep,estimator,S_size,TP,PE";
  for (int j = 1; j <= report_coefs; ++j) out << ",beta_" << j;
  out << ",beta_N,sigma2";
  for (int t = 1; t <= q; ++t) out << ",theta" << t;
  out << '\n';
}

void write_reps_rows(std::ostream& out, const std::vector<RepSummary>& reps, Estimator est,
                     int report_coefs, int q, const std::vector<std::string>& lead_values) {
  for (const RepSummary& r : reps) {
    for (const auto& l : lead_values) out << l << ',';
    out << r.rep + 1 << ',' << to_string(est);
    if (!r.ok) {
      for (int k = 0; k < 3 + report_coefs + 2 + q; ++k) out << ",NA";
      out << '\n';
      continue;
    }
    out << ',' << r.active_size << ',' << r.true_positives << ',' << num(r.pe);
    for (int j = 0; j < report_coefs; ++j) out << ',' << num(r.coefs(j));
    out << ',' << num(r.beta_N) << ',' << num(r.sigma2);
    for (int t = 0; t < q; ++t) out << ',' << num(t < r.theta.size() ? r.theta(t) : NAN);
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const StudyResult& result) {
  const int k = result.config.report_coefs;
  const int q = result.config.sim.q;
  std::vector<StatColumn> cols = selection_columns();
  for (auto& c : coef_columns(k)) cols.push_back(std::move(c));
  for (auto& c : variance_columns(q, true)) cols.push_back(std::move(c));
  write_stat_header(out, {"estimator"}, cols);
  const std::string est = to_string(result.config.estimator);
  write_stat_rows(out, {est}, cols, result.summary);
  if (result.config.standard_errors) {
    out << est << ",coverage,NA,NA,NA";
    for (int j = 0; j < k; ++j) {
      const auto& cov = result.summary.coverage;
      out << ',' << num(j < static_cast<int>(cov.size()) ? cov[static_cast<std::size_t>(j)] : NAN);
    }
    for (int c = 0; c < 2 + q; ++c) out << ",NA";
    out << '\n';
  }
}

RunOutcome run(const RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  RunOutcome outcome;
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());

  const StudyConfig& st = cfg.study;
  switch (cfg.mode) {
    case Mode::Simulate: {
      StudyConfig sc = cfg.study;
      sc.proxy = resolve_proxy(cfg.proxy_text, sc.sim.q);
      const StudyResult result = run_study(sc);
      {
        std::ofstream out = create(dir / "reps.csv");
        write_reps_header(out, sc.report_coefs, sc.sim.q);
        write_reps_rows(out, result.reps, sc.estimator, sc.report_coefs, sc.sim.q);
      }
      {
        std::ofstream out = create(dir / "summary.csv");
        write_summary_csv(out, result);
      }
      outcome.files = {"reps.csv", "summary.csv"};
      if (cfg.save_data) {
        fs::create_directories(dir / "data");
        for (int r = 0; r < sc.sim.reps; ++r) {
          std::ostringstream name;
          name << "data/rep_" << std::setw(4) << std::setfill('0') << r + 1 << ".csv";
          std::ofstream out = create(dir / name.str());
          write_grouped_csv(out, generate(sc.sim, r).data);
          outcome.files.push_back(name.str());
        }
      }
      report_failures(result.reps, outcome.message);
      if (result.summary.reps_ok == 0) outcome.exit_code = kExitAllFailed;
      break;
    }
    case Mode::Fit: {
      std::vector<int> order;
      const GroupedDataset ds = read_grouped_csv(cfg.data_path, &order);
      StudyConfig sc = cfg.study;
      for (int j : sc.unpenalized) {
        if (j >= ds.p()) throw ConfigError("model.unpenalized column beyond p");
      }
      sc.proxy = resolve_proxy(cfg.proxy_text, ds.q());
      if (cfg.instruments_text != "sieve") {
        const std::string path = cfg.instruments_text.substr(std::string("external:").size());
        Mat W = reorder_rows(read_matrix_csv(path), order, path);
        if (W.cols() != ds.p()) {
          throw DataError("instrument file " + path + " must have p = " + std::to_string(ds.p()) +
                          " columns");
        }
        sc.instruments = InstrumentSource::external(std::move(W));
      }
      if (sc.lambda.kind == LambdaPolicy::Kind::ExBic &&
          (sc.estimator == Estimator::Mple || sc.estimator == Estimator::Pls)) {
        throw ConfigError("ExBIC applies to PFGMM only");
      }
      Estimate est;
      try {
        est = estimate(sc, ds);
      } catch (const ConfigError&) {
        throw;
      } catch (const DataError&) {
        throw;
      } catch (const std::exception& e) {
        outcome.exit_code = kExitAllFailed;
        outcome.message = std::string("fit failed: ") + e.what() + "\n";
        break;
      }
      const ActiveSet active = ActiveSet::from_beta(est.beta);
      nlohmann::json j;
      j["estimator"] = to_string(sc.estimator);
      j["lambda"] = est.lambda;
      j["n"] = ds.n();
      j["p"] = ds.p();
      j["q"] = ds.q();
      j["groups"] = ds.num_groups();
      j["beta"] = to_json(est.beta);
      nlohmann::json support = nlohmann::json::array();
      for (int idx : active.indices()) support.push_back(idx + 1);
      j["active_set"] = support;
      j["theta"] = to_json(est.theta);
      j["sigma2"] = est.sigma2;
      if (est.se.size() > 0) {
        nlohmann::json se = nlohmann::json::object();
        for (int idx : active.indices()) {
          if (!std::isnan(est.se(idx))) se[std::to_string(idx + 1)] = est.se(idx);
        }
        j["standard_errors"] = se;
      } else {
        j["standard_errors"] = nullptr;
      }
      j["objective"] = est.fit.objective;
      j["converged"] = est.fit.converged;
      j["iterations"] = est.fit.iterations;
      std::ofstream out = create(dir / "fit.json");
      out << j.dump(2) << '\n';
      outcome.files = {"fit.json"};
      break;
    }
    case Mode::Benchmark: {
      std::vector<std::string> label_names;
      std::vector<Cell> cells = bench_cells(cfg, label_names);
      const ProxySpec proxy = resolve_proxy(cfg.proxy_text, st.sim.q);
      for (Cell& c : cells) {
        c.config.proxy = proxy;
        c.result = run_study(c.config);
        report_failures(c.result.reps, outcome.message);
      }
      const std::string name = to_string(cfg.bench);
      {
        std::ofstream out = create(dir / (name + ".csv"));
        if (cfg.bench == Bench::Table1 || cfg.bench == Bench::Table2 ||
            cfg.bench == Bench::Table3) {
          const auto cols = table_columns(cfg.bench, st.report_coefs, st.sim.q);
          write_stat_header(out, label_names, cols);
          for (const Cell& c : cells) write_stat_rows(out, c.labels, cols, c.result.summary);
        } else {
          write_figure_csv(out, label_names, cells);
        }
      }
      {
        std::ofstream out = create(dir / (name + "_reps.csv"));
        write_reps_header(out, st.report_coefs, st.sim.q, label_names);
        for (const Cell& c : cells) {
          write_reps_rows(out, c.result.reps, c.config.estimator, st.report_coefs, st.sim.q,
                          c.labels);
        }
      }
      outcome.files = {name + ".csv", name + "_reps.csv"};
      if (all_failed(cells)) outcome.exit_code = kExitAllFailed;
      break;
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  nlohmann::json m;
  m["tool"] = "pfgmm";
  m["mode"] = to_string(cfg.mode);
  nlohmann::json settings = nlohmann::json::object();
  const Settings effective = effective_settings(cfg);
  for (const auto& [section, entries] : effective.sections()) {
    for (const auto& [key, value] : entries) settings[section][key] = value;
  }
  m["settings"] = settings;
  m["seed"] = st.sim.seed;
  m["threads"] = st.threads;
  m["wall_time_seconds"] = wall;
  m["versions"] = {{"pfgmm", PFGMM_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"ceres", CERES_VERSION_STRING},
                   {"compiler", __VERSION__}};
  m["outputs"] = outcome.files;
  m["exit_code"] = outcome.exit_code;
  std::ofstream out = create(dir / "manifest.json");
  out << m.dump(2) << '\n';
  outcome.files.push_back("manifest.json");
  return outcome;
}

int run_main(const Settings& settings, Mode mode, std::ostream& err) {
  try {
    const RunConfig cfg = make_run_config(settings, mode);
    const RunOutcome outcome = run(cfg);
    err << outcome.message;
    if (outcome.exit_code == kExitAllFailed) err << "error: every replication failed\n";
    return outcome.exit_code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error";
    if (e.row() > 0) err << " at row " << e.row();
    err << ": " << e.what() << '\n';
    return kExitData;
  } catch (const InvalidParameter& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace pfgmm
