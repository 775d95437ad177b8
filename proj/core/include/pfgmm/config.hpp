#pragma once

#include "pfgmm/study.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pfgmm {

// Sectioned `key = value` text. Later assignments win; see README for the grammar.
class Settings {
 public:
  using Section = std::map<std::string, std::string>;

  static Settings parse(std::istream& in);
  // INI text, or a run manifest (JSON) whose "settings" object is used.
  static Settings load(const std::string& path);
  static Settings from_json_text(const std::string& text);

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  // Entries of `over` replace ours.
  void merge(const Settings& over);

  const std::map<std::string, Section>& sections() const { return data_; }
  std::string to_ini() const;

 private:
  std::map<std::string, Section> data_;
};

enum class Mode { Simulate, Fit, Benchmark };

std::string to_string(Mode m);

enum class Bench { Table1, Table2, Table3, Fig1, Fig2, Fig3, Fig4 };

std::string to_string(Bench b);
Bench parse_bench(const std::string& text);  // 1, 2, 3, table1.., fig1..

struct RunConfig {
  Mode mode = Mode::Simulate;
  StudyConfig study;
  // Used when the estimator is MPLE; `study.lambda` holds whichever policy is active.
  LambdaPolicy pfgmm_lambda = LambdaPolicy::fixed(0.1);
  LambdaPolicy mple_lambda = LambdaPolicy::bic(default_mple_grid());
  std::string proxy_text = "logn";
  std::string instruments_text = "sieve";
  std::string data_path;  // fit
  std::string out_dir = ".";
  bool save_data = false;  // simulate: also write each replication's dataset
  Bench bench = Bench::Table1;
  double bench_strength = 6.0;
  std::vector<double> bench_strengths{0.0, 0.2, 0.5, 1.5, 6.0};

  // Study settings for `est`, picking the matching lambda policy.
  StudyConfig study_for(Estimator est) const;
};

// Unknown sections or keys and unparseable values raise ConfigError.
RunConfig make_run_config(const Settings& s, Mode mode);

// Every effective parameter, in the form make_run_config reads back.
Settings effective_settings(const RunConfig& cfg);

LambdaPolicy parse_lambda_policy(const std::string& text);
std::string to_string(const LambdaPolicy& policy);

// Shortest text that parses back to the same double.
std::string format_double(double v);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace pfgmm
