#pragma once

#include "pfgmm/config.hpp"
#include "pfgmm/study.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace pfgmm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitAllFailed = 4;

// Per-rep rows: rep, estimator, S_size, TP, PE, beta_1..beta_k, beta_N, sigma2, theta1..thetaq.
// `lead` names extra leading columns whose values come from `lead_values`.
void write_reps_header(std::ostream& out, int report_coefs, int q,
                       const std::vector<std::string>& lead = {});
void write_reps_rows(std::ostream& out, const std::vector<RepSummary>& reps, Estimator est,
                     int report_coefs, int q, const std::vector<std::string>& lead_values = {});

// Mean, SD and MSE rows in the study-summary layout (plus coverage when available).
void write_summary_csv(std::ostream& out, const StudyResult& result);

struct RunOutcome {
  int exit_code = kExitOk;
  std::vector<std::string> files;  // written artifacts, relative to the output directory
  std::string message;
};

// Executes one run and writes its artifacts, including manifest.json. Configuration
// and data problems surface as ConfigError and DataError.
RunOutcome run(const RunConfig& cfg);

// Settings to exit code: builds the RunConfig, runs it and maps errors to 2/3/4,
// printing diagnostics to `err`.
int run_main(const Settings& settings, Mode mode, std::ostream& err);

}  // namespace pfgmm
