#include "pfgmm/config.hpp"
#include "pfgmm/error.hpp"
#include "pfgmm/report.hpp"
#include "pfgmm/runner.hpp"

#include <CLI11.hpp>

#ifdef PFGMM_HAVE_GLOG
#include <glog/logging.h>
#endif

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using pfgmm::Settings;

struct Common {
  std::string config;
  std::vector<std::string> defines;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> estimator;
  std::optional<std::string> penalty;
  std::optional<std::string> lambda;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "INI settings file or a previous manifest.json");
  cmd->add_option("-D,--define", c.defines, "Override one setting: section.key=value");
  cmd->add_option("-o,--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--threads", c.threads, "Worker threads (falls back to PFGMM_THREADS)");
  cmd->add_option("--estimator", c.estimator, "mple, pls, pfgmm, 2mle or 2reml");
  cmd->add_option("--penalty", c.penalty, "e.g. scad:lambda=0.1,a=3.7");
  cmd->add_option("--lambda", c.lambda, "0.1, fixed:0.1, bic:<grid> or exbic:<grid>");
}

void define(Settings& s, const std::string& text) {
  const auto eq = text.find('=');
  const auto dot = text.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw pfgmm::ConfigError("expected section.key=value, got '" + text + "'");
  }
  s.set(text.substr(0, dot), text.substr(dot + 1, eq - dot - 1), text.substr(eq + 1));
}

Settings collect(const Common& c, const std::vector<std::pair<std::string, std::string>>& extra) {
  Settings s = c.config.empty() ? Settings{} : Settings::load(c.config);
  Settings over;
  if (c.out) over.set("run", "out", *c.out);
  if (c.seed) over.set("run", "seed", std::to_string(*c.seed));
  if (c.threads) over.set("run", "threads", std::to_string(*c.threads));
  if (c.estimator) over.set("model", "estimator", *c.estimator);
  if (c.penalty) over.set("model", "penalty", *c.penalty);
  if (c.lambda) {
    // The estimator decides which policy a bare --lambda means.
    const bool mple = c.estimator ? *c.estimator == "mple"
                                  : s.get("model", "estimator").value_or("") == "mple";
    over.set("model", mple ? "mple_lambda" : "lambda", *c.lambda);
  }
  for (const auto& [key, value] : extra) define(over, key + "=" + value);
  for (const auto& d : c.defines) define(over, d);
  s.merge(over);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef PFGMM_HAVE_GLOG
  google::InitGoogleLogging(argv[0]);
#endif
  CLI::App app{"Variable selection in linear mixed models with endogenous covariates"};
  app.require_subcommand(1);

  Common sim_opts;
  std::optional<int> sim_reps;
  std::optional<std::string> sim_endo;
  std::optional<std::string> sim_set;
  std::optional<double> sim_strength;
  std::optional<double> sim_rho;
  bool save_data = false;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo study on simulated data");
  add_common(simulate, sim_opts);
  simulate->add_option("--reps", sim_reps, "Replications");
  simulate->add_option("--endogeneity", sim_endo, "none, level1, level2-intercept, level2-slope");
  simulate->add_option("--set", sim_set, "set1..set4 or a 1-based column list");
  simulate->add_option("--strength", sim_strength, "rho_e or rho_b");
  simulate->add_option("--rho", sim_rho, "AR(1) covariate correlation");
  simulate->add_flag("--save-data", save_data, "Write each replication's dataset");

  Common fit_opts;
  std::optional<std::string> data;
  std::optional<std::string> proxy;
  std::optional<std::string> instruments;
  bool no_se = false;
  auto* fit = app.add_subcommand("fit", "Fit one estimator to a grouped CSV");
  add_common(fit, fit_opts);
  fit->add_option("--data", data, "CSV with group_id,y,x_1..x_p,z_1..z_q");
  fit->add_option("--proxy", proxy, "logn or custom:<csv>");
  fit->add_option("--instruments", instruments, "sieve or external:<csv>");
  fit->add_flag("--no-se", no_se, "Skip standard errors");

  Common bench_opts;
  std::optional<std::string> table;
  std::optional<int> bench_reps;
  std::optional<double> bench_strength;
  auto* benchmark = app.add_subcommand("benchmark", "Reproduce a table or figure of the study");
  add_common(benchmark, bench_opts);
  benchmark->add_option("--table", table, "1, 2, 3, fig1, fig2, fig3 or fig4");
  benchmark->add_option("--reps", bench_reps, "Replications per cell");
  benchmark->add_option("--strength", bench_strength, "Endogeneity strength for tables 1 and 3");

  std::string report_in = ".";
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "Markdown and SVG summary of a run directory");
  report->add_option("-i,--in", report_in, "Directory holding a run's CSV output");
  report->add_option("-o,--out", report_out, "Where to write report.md (default: --in)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pfgmm::kExitConfig;
  }

  try {
    if (*simulate) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (sim_reps) extra.emplace_back("run.reps", std::to_string(*sim_reps));
      if (sim_endo) extra.emplace_back("sim.endogeneity", *sim_endo);
      if (sim_set) extra.emplace_back("sim.set", *sim_set);
      if (sim_strength) extra.emplace_back("sim.strength", pfgmm::format_double(*sim_strength));
      if (sim_rho) extra.emplace_back("sim.rho", pfgmm::format_double(*sim_rho));
      if (save_data) extra.emplace_back("run.save_data", "true");
      return pfgmm::run_main(collect(sim_opts, extra), pfgmm::Mode::Simulate, std::cerr);
    }
    if (*fit) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (data) extra.emplace_back("run.data", *data);
      if (proxy) extra.emplace_back("model.proxy", *proxy);
      if (instruments) extra.emplace_back("model.instruments", *instruments);
      if (no_se) extra.emplace_back("model.standard_errors", "false");
      return pfgmm::run_main(collect(fit_opts, extra), pfgmm::Mode::Fit, std::cerr);
    }
    if (*benchmark) {
      std::vector<std::pair<std::string, std::string>> extra;
      if (table) extra.emplace_back("benchmark.table", *table);
      if (bench_reps) extra.emplace_back("run.reps", std::to_string(*bench_reps));
      if (bench_strength) {
        extra.emplace_back("benchmark.strength", pfgmm::format_double(*bench_strength));
      }
      return pfgmm::run_main(collect(bench_opts, extra), pfgmm::Mode::Benchmark, std::cerr);
    }
    for (const auto& f : pfgmm::write_report(report_in, report_out.value_or(report_in))) {
      std::cout << f << '\n';
    }
    return 0;
  } catch (const pfgmm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pfgmm::kExitConfig;
  } catch (const pfgmm::DataError& e) {
    std::cerr << "data error";
    if (e.row() > 0) std::cerr << " at row " << e.row();
    std::cerr << ": " << e.what() << '\n';
    return pfgmm::kExitData;
  }
}
