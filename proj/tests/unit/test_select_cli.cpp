#include "fixtures.hpp"

#include "pfgmm/config.hpp"
#include "pfgmm/csv.hpp"
#include "pfgmm/error.hpp"
#include "pfgmm/runner.hpp"
#include "pfgmm/select.hpp"
#include "pfgmm/study.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace pfgmm;
namespace fs = std::filesystem;

namespace {

GroupedDataset toy_dataset(int n) {
  Vec y = Vec::LinSpaced(n, -1.0, 1.0);
  Mat X(n, 2);
  X.col(0).setOnes();
  X.col(1) = Vec::LinSpaced(n, 0.0, 2.0);
  Mat Z = X.leftCols(1);
  return GroupedDataset(y, X, Z, std::vector<int>(static_cast<std::size_t>(n / 5), 5));
}

// A fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("pfgmm_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const { return (path / leaf).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Settings ini(const std::string& text) {
  std::istringstream in(text);
  return Settings::parse(in);
}

// Small, fast simulation settings writing to `out`.
Settings small_sim(const std::string& out) {
  Settings s = ini(
      "[run]\nseed = 11\nreps = 3\n"
      "[sim]\np = 15\ngroups = 10\n"
      "[model]\nestimator = pfgmm\nlambda = 0.1\n");
  s.set("run", "out", out);
  return s;
}

}  // namespace

TEST_CASE("BIC arithmetic") {
  const GroupedDataset ds = toy_dataset(150);
  FitResult fit;
  fit.active_set = ActiveSet({0, 1, 2, 3, 4});
  fit.loglik = -100.0;
  fit.eta_hat = EtaHat{Vec::Constant(1, 0.5), 1.0};
  CHECK(bic(ds, fit) == doctest::Approx(200.0 + 6.0 * std::log(150.0)));
  CHECK(bic(ds, fit) == doctest::Approx(230.06).epsilon(1e-4));
  CHECK(bic(ds, fit, 0) == doctest::Approx(200.0 + 5.0 * std::log(150.0)));

  fit.eta_hat.reset();
  CHECK_THROWS_AS(bic(ds, fit), InvalidParameter);
}

TEST_CASE("BIC orders equal-size fits by likelihood") {
  const SimDraw draw = generate(fixture::example(10), 0);
  const GroupedDataset& ds = draw.data;
  FitResult good;
  good.beta_hat = draw.truth.params.beta;
  good.active_set = ActiveSet::from_beta(good.beta_hat);
  good.eta_hat = EtaHat{draw.truth.params.theta, draw.truth.params.sigma2};
  FitResult worse = good;
  worse.beta_hat(2) += 0.5;  // same support, lower likelihood

  const ModelParams pg{good.beta_hat, good.eta_hat->theta, good.eta_hat->sigma2,
                       CovStructure::diagonal(ds.q())};
  const ModelParams pw{worse.beta_hat, worse.eta_hat->theta, worse.eta_hat->sigma2,
                       CovStructure::diagonal(ds.q())};
  const double lg = log_likelihood(ds, pg);
  const double lw = log_likelihood(ds, pw);
  REQUIRE(lg > lw);
  CHECK(bic(ds, good) < bic(ds, worse));
  CHECK(bic(ds, worse) - bic(ds, good) == doctest::Approx(2.0 * (lg - lw)));
}

TEST_CASE("ExBIC arithmetic and empty support") {
  const SimDraw draw = generate(fixture::example(10), 0);
  const PfgmmSetup setup = prepare_pfgmm(draw.data, ProxySpec::log_n(), PfgmmOptions{});
  const double n = draw.data.n();

  // beta = 0 with nothing forced: no moments enter, so the loss is 0.
  FitResult empty;
  empty.beta_hat = Vec::Zero(draw.data.p());
  CHECK(exbic(setup.problem, empty) == 0.0);

  // -2 L + |S| log n with the loss evaluated by the problem.
  FitResult fit;
  fit.beta_hat = draw.truth.params.beta;
  fit.active_set = ActiveSet::from_beta(fit.beta_hat);
  const double L = setup.problem.loss(fit.beta_hat);
  CHECK(exbic(setup.problem, fit) == doctest::Approx(-2.0 * L + 5.0 * std::log(n)));

  // The worked number: L = 0.002, |S| = 5, n = 150.
  CHECK(-2.0 * 0.002 + 5.0 * std::log(150.0) == doctest::Approx(25.05).epsilon(1e-4));
}

TEST_CASE("large lambda zeroes beta and ExBIC is zero") {
  const SimDraw draw = generate(fixture::example(10), 0);
  PfgmmOptions opts;  // nothing forced, so every coefficient is penalised
  const PfgmmSetup setup = prepare_pfgmm(draw.data, ProxySpec::log_n(), opts);
  const FitResult fit =
      fit_pfgmm_problem(setup.problem, PenaltySpec::scad(1e4), Vec::Zero(draw.data.p()), opts);
  CHECK(fit.active_set.empty());
  CHECK(exbic(setup.problem, fit) == 0.0);
}

TEST_CASE("argmin and log grid") {
  CHECK(argmin({3.0, 1.0, 1.0, 2.0}) == 1);
  CHECK_THROWS_AS(argmin({}), InvalidParameter);
  const auto g = log_grid(0.05, 5.0, 3);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(5.0));
  CHECK(g[1] == doctest::Approx(0.5));
  CHECK(g[2] == doctest::Approx(0.05));
  CHECK(log_grid(0.1, 1.0, 1) == std::vector<double>{1.0});
}

TEST_CASE("ExBIC grid on level-1 endogenous Set 1 keeps the true model") {
  SimConfig cfg = SimConfig::example21();
  cfg.endo.kind = EndoKind::Level1;
  cfg.endo.set = EndoSet::set(1);
  cfg.endo.strength = 6.0;
  PfgmmOptions opts;
  opts.unpenalized = {0, 1};
  for (int rep = 0; rep < 3; ++rep) {
    const SimDraw draw = generate(cfg, rep);
    const PfgmmSetup setup = prepare_pfgmm(draw.data, ProxySpec::log_n(), opts);
    const PfgmmSelection sel = select_pfgmm_exbic(setup.problem, setup.transformed,
                                                  PenaltySpec::scad(0.1), {0.05, 0.1, 0.2}, opts);
    CAPTURE(rep);
    CHECK(sel.criteria.size() == 3);
    CHECK(sel.fit.active_set.intersection_size(draw.truth.support) == 5);
  }
}

TEST_CASE("BIC grid on exogenous data keeps the true model") {
  const SimConfig cfg = SimConfig::example21();
  FitOptions opts;
  opts.unpenalized = {0, 1};
  for (int rep = 0; rep < 2; ++rep) {
    const SimDraw draw = generate(cfg, rep);
    const MpleSelection sel = select_mple_bic(draw.data, PenaltySpec::scad(0.1),
                                              log_grid(0.05, 5.0, 12), opts, draw.data.n() - 1);
    CAPTURE(rep);
    REQUIRE(!sel.criteria.empty());
    CHECK(sel.lambdas.size() == sel.criteria.size());
    CHECK(sel.fit.active_set.intersection_size(draw.truth.support) == 5);
    // The selected fit carries the smallest criterion.
    CHECK(bic(draw.data, sel.fit) == doctest::Approx(sel.criteria[argmin(sel.criteria)]));
  }
}

TEST_CASE("grouped CSV parsing") {
  SUBCASE("non-contiguous groups keep first-appearance order") {
    std::istringstream in(
        "group_id,y,x_1,x_2,z_1\n"
        "b,1,1,0.5,1\n"
        "a,2,1,0.6,1\n"
        "b,3,1,0.7,1\n");
    std::vector<int> order;
    const GroupedDataset ds = parse_grouped_csv(in, &order);
    CHECK(ds.num_groups() == 2);
    CHECK(ds.group_sizes() == std::vector<int>{2, 1});
    CHECK(ds.group_labels() == std::vector<std::string>{"b", "a"});
    CHECK(order == std::vector<int>{0, 2, 1});
    CHECK(ds.y()(0) == 1.0);
    CHECK(ds.y()(1) == 3.0);
    CHECK(ds.y()(2) == 2.0);
    CHECK(ds.X()(1, 1) == 0.7);
  }
  SUBCASE("malformed rows report their line") {
    auto row_of = [](const std::string& text) {
      std::istringstream in(text);
      try {
        parse_grouped_csv(in);
      } catch (const DataError& e) {
        return e.row();
      }
      return -1L;
    };
    CHECK(row_of("group_id,y,x_1\n1,1,1\n1,2\n") == 3);
    CHECK(row_of("group_id,y,x_1\n1,1,1\n2,2,1\n2,abc,1\n") == 4);
    CHECK(row_of("group_id,y,x_1\n,1,1\n") == 2);
    CHECK(row_of("id,y,x_1\n1,1,1\n") == 1);
    CHECK(row_of("group_id,y,x_2\n1,1,1\n") == 1);
    CHECK(row_of("group_id,y,x_1\n") > 0);
  }
  SUBCASE("write and read back") {
    const SimDraw draw = generate(fixture::example(6), 0);
    std::stringstream buf;
    write_grouped_csv(buf, draw.data);
    const GroupedDataset back = parse_grouped_csv(buf);
    CHECK(back.group_sizes() == draw.data.group_sizes());
    CHECK((back.X() - draw.data.X()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.y() - draw.data.y()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.Z() - draw.data.Z()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("settings grammar") {
  const Settings s = ini(
      "# comment\n"
      "; another\n"
      "[run]\n"
      "seed = 5\n"
      "  reps=7  \n"
      "[model]\n"
      "lambda = exbic:0.2,0.05,0.1\n"
      "[run]\n"
      "seed = 9\n");
  CHECK(*s.get("run", "seed") == "9");
  CHECK(*s.get("run", "reps") == "7");
  CHECK(!s.get("run", "threads"));

  const RunConfig cfg = make_run_config(s, Mode::Simulate);
  CHECK(cfg.study.sim.seed == 9);
  CHECK(cfg.study.sim.reps == 7);
  CHECK(cfg.pfgmm_lambda.kind == LambdaPolicy::Kind::ExBic);
  CHECK(cfg.pfgmm_lambda.grid == std::vector<double>{0.05, 0.1, 0.2});

  Settings over;
  over.set("run", "seed", "42");
  Settings merged = s;
  merged.merge(over);
  CHECK(make_run_config(merged, Mode::Simulate).study.sim.seed == 42);

  CHECK_THROWS_AS(ini("[nosuch]\n"), ConfigError);
  CHECK_THROWS_AS(ini("[run]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(ini("seed = 1\n"), ConfigError);
  CHECK_THROWS_AS(ini("[run]\nseed\n"), ConfigError);
  CHECK_THROWS_AS(ini("[run\n"), ConfigError);
  CHECK_THROWS_AS(make_run_config(ini("[run]\nreps = x\n"), Mode::Simulate), ConfigError);
  CHECK_THROWS_AS(make_run_config(ini("[sim]\nendogeneity = weird\n"), Mode::Simulate),
                  ConfigError);
  CHECK_THROWS_AS(make_run_config(Settings{}, Mode::Fit), ConfigError);
  CHECK_THROWS_AS(make_run_config(ini("[run]\ndata = x.csv\n"), Mode::Simulate), ConfigError);
}

TEST_CASE("lambda policy grammar") {
  CHECK(parse_lambda_policy("0.1").kind == LambdaPolicy::Kind::Fixed);
  CHECK(parse_lambda_policy("fixed:0.25").value == 0.25);
  const LambdaPolicy b = parse_lambda_policy("bic:log(0.05,5,3)");
  CHECK(b.kind == LambdaPolicy::Kind::Bic);
  REQUIRE(b.grid.size() == 3);
  CHECK(b.grid[0] == doctest::Approx(0.05));
  CHECK(b.grid[2] == doctest::Approx(5.0));
  CHECK(parse_lambda_policy("bic").grid == default_mple_grid());

  for (const char* text : {"bic:0.1,0.1", "exbic:0,0.1", "fixed:-1", "grid:0.1", "abc", "bic:"}) {
    CAPTURE(std::string(text));
    CHECK_THROWS_AS(parse_lambda_policy(text), ConfigError);
  }
  for (const char* text : {"fixed:0.1", "bic:0.05,0.5", "exbic:0.05,0.1,0.2"}) {
    const LambdaPolicy p = parse_lambda_policy(text);
    CHECK(to_string(p) == text);
    CHECK(to_string(parse_lambda_policy(to_string(p))) == to_string(p));
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("manifest JSON round-trip") {
  Settings s = small_sim("somewhere");
  const RunConfig cfg = make_run_config(s, Mode::Simulate);
  const Settings eff = effective_settings(cfg);
  nlohmann::json j;
  for (const auto& [section, entries] : eff.sections()) {
    for (const auto& [key, value] : entries) j["settings"][section][key] = value;
  }
  const Settings back = Settings::from_json_text(j.dump());
  CHECK(back.to_ini() == eff.to_ini());
  CHECK(effective_settings(make_run_config(back, Mode::Simulate)).to_ini() == eff.to_ini());

  CHECK_THROWS_AS(Settings::from_json_text("{not json"), ConfigError);
  CHECK_THROWS_AS(Settings::from_json_text(R"({"settings": {"run": {"seed": 3}}})"), ConfigError);
  CHECK_THROWS_AS(Settings::from_json_text(R"({"settings": {"run": {"nope": "3"}}})"), ConfigError);
}

TEST_CASE("simulate run writes tables and a complete manifest") {
  TempDir dir("simulate");
  std::ostringstream err;
  REQUIRE(run_main(small_sim(dir.str()), Mode::Simulate, err) == kExitOk);
  CHECK(fs::exists(dir.path / "reps.csv"));
  CHECK(fs::exists(dir.path / "summary.csv"));

  const auto m = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
  CHECK(m["mode"] == "simulate");
  CHECK(m["seed"] == 11);
  CHECK(m.contains("wall_time_seconds"));
  CHECK(m["versions"].contains("eigen"));
  CHECK(m["exit_code"] == 0);

  // Every parameter make_run_config reads has a value in the manifest.
  const Settings from_manifest = Settings::load(dir.str("manifest.json"));
  const RunConfig cfg = make_run_config(from_manifest, Mode::Simulate);
  CHECK(effective_settings(cfg).to_ini() == from_manifest.to_ini());
  for (const char* key : {"seed", "reps", "threads", "out", "save_data"}) {
    CHECK(from_manifest.get("run", key));
  }
  for (const char* key : {"groups", "group_size", "p", "q", "rho", "sigma2", "theta", "beta",
                          "endogeneity", "set", "strength"}) {
    CHECK(from_manifest.get("sim", key));
  }
  for (const char* key : {"estimator", "penalty", "lambda", "mple_lambda", "proxy", "instruments",
                          "init", "unpenalized", "standard_errors", "report_coefs"}) {
    CHECK(from_manifest.get("model", key));
  }

  const TextTable reps = read_text_csv(dir.str("reps.csv"));
  CHECK(reps.rows.size() == 3);
  CHECK(reps.header == std::vector<std::string>{"rep", "estimator", "S_size", "TP", "PE", "beta_1",
                                                "beta_2", "beta_3", "beta_4", "beta_5", "beta_N",
                                                "sigma2", "theta1", "theta2"});
}

TEST_CASE("rerunning from the manifest reproduces the CSVs byte for byte") {
  TempDir first("rerun_a");
  TempDir second("rerun_b");
  std::ostringstream err;
  Settings s = small_sim(first.str());
  s.set("run", "threads", "2");
  REQUIRE(run_main(s, Mode::Simulate, err) == kExitOk);

  Settings again = Settings::load(first.str("manifest.json"));
  again.set("run", "out", second.str());
  again.set("run", "threads", "1");
  REQUIRE(run_main(again, Mode::Simulate, err) == kExitOk);
  for (const char* name : {"reps.csv", "summary.csv"}) {
    CAPTURE(std::string(name));
    CHECK(slurp(first.path / name) == slurp(second.path / name));
    CHECK(!slurp(first.path / name).empty());
  }
}

TEST_CASE("exit codes") {
  TempDir dir("exit");
  std::ostringstream err;

  SUBCASE("config errors give 2") {
    CHECK(run_main(ini("[model]\nestimator = nope\n"), Mode::Simulate, err) == kExitConfig);
    CHECK(run_main(ini("[model]\nlambda = bic:0.2,0.1,0.1\n"), Mode::Simulate, err) == kExitConfig);
    CHECK(run_main(ini("[sim]\nrho = 1.5\n"), Mode::Simulate, err) == kExitConfig);
    CHECK(err.str().find("config error") != std::string::npos);
  }
  SUBCASE("data errors give 3 and name the row") {
    std::ofstream(dir.path / "bad.csv") << "group_id,y,x_1,x_2,z_1\n"
                                           "1,1,1,0.1,1\n"
                                           "1,2,1,0.2,1\n"
                                           "2,3,1,oops,1\n";
    Settings s;
    s.set("run", "data", dir.str("bad.csv"));
    s.set("run", "out", dir.str("out"));
    CHECK(run_main(s, Mode::Fit, err) == kExitData);
    CHECK(err.str().find("row 4") != std::string::npos);

    s.set("run", "data", dir.str("missing.csv"));
    CHECK(run_main(s, Mode::Fit, err) == kExitData);
  }
  SUBCASE("every replication failing gives 4") {
    // Two observations per group and nothing penalised: 2MLE on the full model
    // has more coefficients than observations in every replication.
    Settings s = ini(
        "[run]\nreps = 2\n"
        "[sim]\np = 12\ngroups = 2\ngroup_size = 2\n"
        "[model]\nestimator = 2mle\nunpenalized = 1,2,3,4,5,6,7,8,9,10,11,12\n");
    s.set("run", "out", dir.str("out4"));
    CHECK(run_main(s, Mode::Simulate, err) == kExitAllFailed);
    CHECK(err.str().find("every replication failed") != std::string::npos);
    CHECK(fs::exists(dir.path / "out4" / "manifest.json"));
  }
}

TEST_CASE("fit writes fit.json") {
  TempDir dir("fit");
  SimConfig sim = fixture::example(12);
  const SimDraw draw = generate(sim, 0);
  {
    std::ofstream out(dir.path / "data.csv");
    write_grouped_csv(out, draw.data);
  }
  Settings s = ini("[model]\nestimator = pfgmm\nlambda = 0.1\n");
  s.set("run", "data", dir.str("data.csv"));
  s.set("run", "out", dir.str("out"));
  std::ostringstream err;
  REQUIRE(run_main(s, Mode::Fit, err) == kExitOk);

  const auto j = nlohmann::json::parse(slurp(dir.path / "out" / "fit.json"));
  for (const char* key :
       {"estimator", "lambda", "beta", "active_set", "theta", "sigma2", "standard_errors", "n", "p"}) {
    CAPTURE(std::string(key));
    CHECK(j.contains(key));
  }
  CHECK(j["n"] == draw.data.n());
  CHECK(j["beta"].size() == 12);
  CHECK(j["theta"].size() == 2);
  // Standard errors are keyed by the 1-based column and exist exactly on the active set.
  REQUIRE(j["standard_errors"].is_object());
  std::vector<int> with_se;
  for (const auto& [key, value] : j["standard_errors"].items()) {
    CHECK(value.get<double>() > 0.0);
    with_se.push_back(std::stoi(key));
  }
  std::sort(with_se.begin(), with_se.end());
  CHECK(with_se == j["active_set"].get<std::vector<int>>());
  CHECK(j["active_set"].size() == 5);
}

TEST_CASE("table 1 layout") {
  TempDir dir("table1");
  Settings s = ini(
      "[run]\nreps = 1\nseed = 7\n"
      "[sim]\np = 16\ngroups = 10\n"
      "[model]\nmple_lambda = bic:0.1,0.5,2\n"
      "[benchmark]\ntable = 1\n");
  s.set("run", "out", dir.str());
  std::ostringstream err;
  REQUIRE(run_main(s, Mode::Benchmark, err) == kExitOk);
  const TextTable t = read_text_csv(dir.str("table1.csv"));
  CHECK(t.header == std::vector<std::string>{"endogeneity", "covariates", "stat", "S_size", "TP",
                                             "PE", "beta_1", "beta_2", "beta_3", "beta_4",
                                             "beta_5", "beta_N", "sigma2", "theta1", "theta2"});
  // One row block per cell: none, then three endogeneity kinds times four sets.
  REQUIRE(t.rows.size() == 13 * 3);
  CHECK(t.rows[0][0] == "none");
  CHECK(t.rows[0][2] == "mean");
  CHECK(t.rows[1][2] == "sd");
  CHECK(t.rows[2][2] == "mse");
  CHECK(t.rows[3][0] == "level1");
  CHECK(t.rows[3][1] == "set1");
  CHECK(t.rows[38][0] == "level2-slope");
  CHECK(t.rows[38][1] == "set4");
  // Selection columns have no MSE.
  CHECK(t.rows[2][t.column("S_size")] == "NA");
  CHECK(t.rows[2][t.column("beta_3")] != "NA");
  CHECK(fs::exists(dir.path / "table1_reps.csv"));
}
