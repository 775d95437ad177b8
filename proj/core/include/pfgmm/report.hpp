#pragma once

#include "pfgmm/csv.hpp"

#include <string>
#include <vector>

namespace pfgmm {

std::string markdown_table(const TextTable& table);

// Active-set sizes from a fig*.csv table: one panel per covariate set, PLS bars with
// the PFGMM bars drawn over them and +-1 SE whiskers.
std::string figure_svg(const TextTable& fig, const std::string& title);

// Bar chart of how often each |S| occurs.
std::string histogram_svg(const std::vector<int>& sizes, const std::string& title);

// Reads whatever tables a run left in `in_dir` (table*.csv, fig*.csv, summary.csv,
// reps.csv, fit.json) and writes report.md plus SVG charts into `out_dir`.
// Returns the written file names.
std::vector<std::string> write_report(const std::string& in_dir, const std::string& out_dir);

}  // namespace pfgmm
