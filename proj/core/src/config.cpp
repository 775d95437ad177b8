#include "pfgmm/config.hpp"

#include "pfgmm/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace pfgmm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "reps", "threads", "out", "data", "save_data"}},
      {"sim",
       {"groups", "group_size", "p", "q", "rho", "sigma2", "theta", "beta", "endogeneity", "set",
        "strength"}},
      {"model",
       {"estimator", "penalty", "lambda", "mple_lambda", "proxy", "instruments", "init",
        "unpenalized", "standard_errors", "report_coefs"}},
      {"benchmark", {"table", "strength", "strengths"}},
  };
  return keys;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_integer(const std::string& text, const std::string& what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(what + ": expected an integer, got '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* first = text.data();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
  if (text == "false" || text == "no" || text == "off" || text == "0") return false;
  throw ConfigError(what + ": expected true or false, got '" + text + "'");
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k > 0) out += ",";
    out += format_double(v[k]);
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.rfind("log(", 0) == 0 && text.back() == ')') {
    const std::vector<std::string> args = split(text.substr(4, text.size() - 5), ',');
    if (args.size() != 3) throw ConfigError("log grid needs log(lo,hi,count)");
    const double lo = parse_double(args[0], "lambda grid");
    const double hi = parse_double(args[1], "lambda grid");
    const int count = parse_integer<int>(args[2], "lambda grid");
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw ConfigError("bad log grid '" + text + "'");
    grid = log_grid(lo, hi, count);
  } else {
    grid = parse_double_list(text);
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

EndoKind parse_endo_kind(const std::string& text) {
  if (text == "none") return EndoKind::None;
  if (text == "level1") return EndoKind::Level1;
  if (text == "level2-intercept") return EndoKind::Level2Intercept;
  if (text == "level2-slope") return EndoKind::Level2Slope;
  throw ConfigError("unknown endogeneity '" + text + "'");
}

std::string endo_kind_name(EndoKind k) {
  switch (k) {
    case EndoKind::None: return "none";
    case EndoKind::Level1: return "level1";
    case EndoKind::Level2Intercept: return "level2-intercept";
    case EndoKind::Level2Slope: return "level2-slope";
  }
  return "none";
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  if (text.empty() || text == "none") return out;
  for (const std::string& item : split(text, ',')) out.push_back(parse_integer<int>(item, what));
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& item : split(text, ',')) out.push_back(parse_double(item, "list"));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

Settings Settings::parse(std::istream& in) {
  Settings s;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (!known_keys().count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    try {
      s.set(section, key, trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return s;
}

Settings Settings::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (j.contains("settings")) j = j["settings"];
  if (!j.is_object()) throw ConfigError("manifest settings must be an object");
  Settings s;
  for (const auto& [section, entries] : j.items()) {
    if (!entries.is_object()) throw ConfigError("manifest section " + section + " is not an object");
    for (const auto& [key, value] : entries.items()) {
      if (!value.is_string()) throw ConfigError("manifest value " + section + "." + key + " is not a string");
      s.set(section, key, value.get<std::string>());
    }
  }
  return s;
}

Settings Settings::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return from_json_text(text);
  std::istringstream again(text);
  return parse(again);
}

void Settings::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto it = known_keys().find(section);
  if (it == known_keys().end()) throw ConfigError("unknown section [" + section + "]");
  if (!it->second.count(key)) throw ConfigError("unknown key " + section + "." + key);
  data_[section][key] = value;
}

std::optional<std::string> Settings::get(const std::string& section, const std::string& key) const {
  const auto s = data_.find(section);
  if (s == data_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void Settings::merge(const Settings& over) {
  for (const auto& [section, entries] : over.data_) {
    for (const auto& [key, value] : entries) data_[section][key] = value;
  }
}

std::string Settings::to_ini() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, entries] : data_) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
  }
  return out.str();
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Simulate: return "simulate";
    case Mode::Fit: return "fit";
    case Mode::Benchmark: return "benchmark";
  }
  return "?";
}

std::string to_string(Bench b) {
  switch (b) {
    case Bench::Table1: return "table1";
    case Bench::Table2: return "table2";
    case Bench::Table3: return "table3";
    case Bench::Fig1: return "fig1";
    case Bench::Fig2: return "fig2";
    case Bench::Fig3: return "fig3";
    case Bench::Fig4: return "fig4";
  }
  return "?";
}

Bench parse_bench(const std::string& text) {
  static const std::map<std::string, Bench> names{
      {"1", Bench::Table1},      {"2", Bench::Table2},      {"3", Bench::Table3},
      {"table1", Bench::Table1}, {"table2", Bench::Table2}, {"table3", Bench::Table3},
      {"fig1", Bench::Fig1},     {"fig2", Bench::Fig2},     {"fig3", Bench::Fig3},
      {"fig4", Bench::Fig4}};
  const auto it = names.find(text);
  if (it == names.end()) throw ConfigError("unknown benchmark table '" + text + "'");
  return it->second;
}

LambdaPolicy parse_lambda_policy(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : trim(text.substr(colon + 1));
  LambdaPolicy policy;
  if (colon == std::string::npos) {
    if (head == "bic") {
      policy = LambdaPolicy::bic(default_mple_grid());
    } else {
      policy = LambdaPolicy::fixed(parse_double(head, "lambda"));
    }
  } else if (head == "fixed") {
    policy = LambdaPolicy::fixed(parse_double(rest, "lambda"));
  } else if (head == "bic") {
    policy = LambdaPolicy::bic(parse_grid(rest));
  } else if (head == "exbic") {
    policy = LambdaPolicy::exbic(parse_grid(rest));
  } else {
    throw ConfigError("unknown lambda policy '" + text + "'");
  }
  policy.validate();
  return policy;
}

std::string to_string(const LambdaPolicy& policy) {
  switch (policy.kind) {
    case LambdaPolicy::Kind::Fixed: return "fixed:" + format_double(policy.value);
    case LambdaPolicy::Kind::Bic: return "bic:" + join(policy.grid);
    case LambdaPolicy::Kind::ExBic: return "exbic:" + join(policy.grid);
  }
  return "?";
}

StudyConfig RunConfig::study_for(Estimator est) const {
  StudyConfig cfg = study;
  cfg.estimator = est;
  cfg.lambda = est == Estimator::Mple ? mple_lambda : pfgmm_lambda;
  return cfg;
}

RunConfig make_run_config(const Settings& s, Mode mode) {
  RunConfig cfg;
  cfg.mode = mode;
  SimConfig& sim = cfg.study.sim;
  auto get = [&](const char* section, const char* key) { return s.get(section, key); };
  auto what = [](const char* section, const char* key) { return std::string(section) + "." + key; };

  if (auto v = get("run", "seed")) sim.seed = parse_integer<std::uint64_t>(*v, "run.seed");
  if (auto v = get("run", "reps")) sim.reps = parse_integer<int>(*v, "run.reps");
  if (auto v = get("run", "threads")) {
    cfg.study.threads = parse_integer<int>(*v, "run.threads");
  } else if (const char* env = std::getenv("PFGMM_THREADS"); env && *env) {
    cfg.study.threads = parse_integer<int>(trim(env), "PFGMM_THREADS");
  }
  if (auto v = get("run", "out")) cfg.out_dir = *v;
  if (auto v = get("run", "data")) cfg.data_path = *v;
  if (auto v = get("run", "save_data")) cfg.save_data = parse_bool(*v, "run.save_data");

  if (auto v = get("sim", "groups")) sim.I = parse_integer<int>(*v, what("sim", "groups"));
  if (auto v = get("sim", "group_size")) sim.n_i = parse_integer<int>(*v, what("sim", "group_size"));
  if (auto v = get("sim", "p")) sim.p = parse_integer<int>(*v, "sim.p");
  if (auto v = get("sim", "q")) sim.q = parse_integer<int>(*v, "sim.q");
  if (auto v = get("sim", "rho")) sim.rho = parse_double(*v, "sim.rho");
  if (auto v = get("sim", "sigma2")) sim.sigma2_0 = parse_double(*v, "sim.sigma2");
  std::vector<double> lead{1.0, 2.0, 4.0, 3.0, 3.0};
  if (auto v = get("sim", "beta")) lead = parse_double_list(*v);
  if (static_cast<int>(lead.size()) > sim.p) throw ConfigError("sim.beta has more than p entries");
  sim.beta0 = Vec::Zero(sim.p);
  for (std::size_t j = 0; j < lead.size(); ++j) sim.beta0(static_cast<Eigen::Index>(j)) = lead[j];
  if (auto v = get("sim", "theta")) {
    const std::vector<double> th = parse_double_list(*v);
    sim.theta0 = Eigen::Map<const Vec>(th.data(), static_cast<Eigen::Index>(th.size()));
  } else {
    sim.theta0 = Vec::Constant(sim.q, 0.56);
  }
  if (auto v = get("sim", "endogeneity")) sim.endo.kind = parse_endo_kind(*v);
  if (auto v = get("sim", "set")) sim.endo.set = EndoSet::parse(*v);
  if (auto v = get("sim", "strength")) sim.endo.strength = parse_double(*v, "sim.strength");

  StudyConfig& st = cfg.study;
  if (auto v = get("model", "estimator")) st.estimator = parse_estimator(*v);
  if (auto v = get("model", "penalty")) st.penalty = parse_penalty(*v);
  if (auto v = get("model", "lambda")) cfg.pfgmm_lambda = parse_lambda_policy(*v);
  if (auto v = get("model", "mple_lambda")) cfg.mple_lambda = parse_lambda_policy(*v);
  if (auto v = get("model", "proxy")) {
    if (*v != "logn" && v->rfind("custom:", 0) != 0) {
      throw ConfigError("model.proxy must be logn or custom:<path>");
    }
    cfg.proxy_text = *v;
  }
  if (auto v = get("model", "instruments")) {
    if (*v != "sieve" && v->rfind("external:", 0) != 0) {
      throw ConfigError("model.instruments must be sieve or external:<path>");
    }
    cfg.instruments_text = *v;
  }
  if (auto v = get("model", "init")) {
    if (*v == "zero") {
      st.init = PfgmmOptions::Init::Zero;
    } else if (*v == "pls") {
      st.init = PfgmmOptions::Init::Pls;
    } else {
      throw ConfigError("model.init must be zero or pls");
    }
  }
  if (auto v = get("model", "unpenalized")) {
    st.unpenalized.clear();
    for (int j : parse_int_list(*v, "model.unpenalized")) {
      if (j < 1) throw ConfigError("model.unpenalized entries are 1-based column numbers");
      st.unpenalized.push_back(j - 1);
    }
  }
  // fit reports standard errors unless told not to; studies skip them by default.
  st.standard_errors = mode == Mode::Fit;
  if (auto v = get("model", "standard_errors")) {
    st.standard_errors = parse_bool(*v, "model.standard_errors");
  }
  if (auto v = get("model", "report_coefs")) {
    st.report_coefs = parse_integer<int>(*v, "model.report_coefs");
  }
  st.lambda = st.estimator == Estimator::Mple ? cfg.mple_lambda : cfg.pfgmm_lambda;

  if (auto v = get("benchmark", "table")) cfg.bench = parse_bench(*v);
  if (auto v = get("benchmark", "strength")) {
    cfg.bench_strength = parse_double(*v, "benchmark.strength");
  }
  if (auto v = get("benchmark", "strengths")) cfg.bench_strengths = parse_double_list(*v);

  if (mode == Mode::Fit && cfg.data_path.empty()) throw ConfigError("fit needs run.data");
  if (mode != Mode::Fit && !cfg.data_path.empty()) {
    throw ConfigError("run.data applies to fit only; " + to_string(mode) + " simulates its data");
  }
  if (mode != Mode::Fit && cfg.instruments_text != "sieve") {
    throw ConfigError("external instruments need a data file (fit)");
  }
  if (mode != Mode::Fit) st.validate();
  return cfg;
}

Settings effective_settings(const RunConfig& cfg) {
  Settings s;
  const StudyConfig& st = cfg.study;
  const SimConfig& sim = st.sim;
  s.set("run", "seed", std::to_string(sim.seed));
  s.set("run", "threads", std::to_string(st.threads));
  s.set("run", "out", cfg.out_dir);
  if (cfg.mode == Mode::Fit) {
    s.set("run", "data", cfg.data_path);
  } else {
    s.set("run", "reps", std::to_string(sim.reps));
  }
  if (cfg.mode == Mode::Simulate) s.set("run", "save_data", cfg.save_data ? "true" : "false");

  if (cfg.mode != Mode::Fit) {
    s.set("sim", "groups", std::to_string(sim.I));
    s.set("sim", "group_size", std::to_string(sim.n_i));
    s.set("sim", "p", std::to_string(sim.p));
    s.set("sim", "q", std::to_string(sim.q));
    s.set("sim", "rho", format_double(sim.rho));
    s.set("sim", "sigma2", format_double(sim.sigma2_0));
    s.set("sim", "theta", join(std::vector<double>(sim.theta0.data(), sim.theta0.data() + sim.theta0.size())));
    Eigen::Index last = sim.beta0.size();
    while (last > 1 && sim.beta0(last - 1) == 0.0) --last;
    s.set("sim", "beta", join(std::vector<double>(sim.beta0.data(), sim.beta0.data() + last)));
    s.set("sim", "endogeneity", endo_kind_name(sim.endo.kind));
    s.set("sim", "set", sim.endo.set.name());
    s.set("sim", "strength", format_double(sim.endo.strength));
  }

  s.set("model", "estimator", to_string(st.estimator));
  s.set("model", "penalty", to_string(st.penalty));
  s.set("model", "lambda", to_string(cfg.pfgmm_lambda));
  s.set("model", "mple_lambda", to_string(cfg.mple_lambda));
  s.set("model", "proxy", cfg.proxy_text);
  s.set("model", "instruments", cfg.instruments_text);
  s.set("model", "init", st.init == PfgmmOptions::Init::Zero ? "zero" : "pls");
  std::string unpen;
  for (std::size_t k = 0; k < st.unpenalized.size(); ++k) {
    if (k > 0) unpen += ",";
    unpen += std::to_string(st.unpenalized[k] + 1);
  }
  s.set("model", "unpenalized", unpen.empty() ? "none" : unpen);
  s.set("model", "standard_errors", st.standard_errors ? "true" : "false");
  s.set("model", "report_coefs", std::to_string(st.report_coefs));

  if (cfg.mode == Mode::Benchmark) {
    s.set("benchmark", "table", to_string(cfg.bench));
    s.set("benchmark", "strength", format_double(cfg.bench_strength));
    s.set("benchmark", "strengths", join(cfg.bench_strengths));
  }
  return s;
}

}  // namespace pfgmm
