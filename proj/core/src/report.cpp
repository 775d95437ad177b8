#include "pfgmm/report.hpp"

#include "pfgmm/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace pfgmm {

namespace fs = std::filesystem;

namespace {

double cell_value(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    return used == s.size() ? v : NAN;
  } catch (const std::exception&) {
    return NAN;
  }
}

// Rounds numeric cells for display; leaves labels alone.
std::string display(const std::string& s) {
  const double v = cell_value(s);
  if (std::isnan(v)) return s == "NA" ? "--" : s;
  if (v == std::floor(v) && std::abs(v) < 1e9) return s;
  std::ostringstream out;
  out.precision(std::abs(v) < 0.01 ? 4 : 3);
  out << std::fixed << v;
  return out.str();
}

const char* kPls = "#f28e2b";
const char* kPfgmm = "#4e79a7";

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string markdown_table(const TextTable& table) {
  std::ostringstream out;
  out << '|';
  for (const auto& h : table.header) out << ' ' << h << " |";
  out << "\n|";
  for (std::size_t k = 0; k < table.header.size(); ++k) out << "---|";
  out << '\n';
  for (const auto& row : table.rows) {
    out << '|';
    for (const auto& c : row) out << ' ' << display(c) << " |";
    out << '\n';
  }
  return out.str();
}

std::string figure_svg(const TextTable& fig, const std::string& title) {
  const int c_set = fig.column("covariates");
  const int c_str = fig.column("strength");
  const int c_est = fig.column("estimator");
  const int c_mean = fig.column("S_mean");
  const int c_se = fig.column("S_se");
  if (c_set < 0 || c_str < 0 || c_est < 0 || c_mean < 0 || c_se < 0) {
    throw DataError("figure table lacks covariates/strength/estimator/S_mean/S_se columns");
  }
  struct Bar {
    double mean = NAN;
    double se = NAN;
  };
  std::vector<std::string> sets;
  std::vector<std::string> strengths;
  std::map<std::string, std::map<std::string, std::map<std::string, Bar>>> bars;
  double top = 1.0;
  for (const auto& row : fig.rows) {
    const std::string& set = row[static_cast<std::size_t>(c_set)];
    const std::string& st = row[static_cast<std::size_t>(c_str)];
    if (std::find(sets.begin(), sets.end(), set) == sets.end()) sets.push_back(set);
    if (std::find(strengths.begin(), strengths.end(), st) == strengths.end()) strengths.push_back(st);
    Bar b{cell_value(row[static_cast<std::size_t>(c_mean)]), cell_value(row[static_cast<std::size_t>(c_se)])};
    if (!std::isnan(b.mean)) top = std::max(top, b.mean + (std::isnan(b.se) ? 0.0 : b.se));
    bars[set][st][row[static_cast<std::size_t>(c_est)]] = b;
  }
  top = std::ceil(top * 1.1);

  const double pw = 300;
  const double ph = 220;
  const double ml = 40;
  const double mb = 30;
  const int cols = 2;
  const int nrows = (static_cast<int>(sets.size()) + cols - 1) / cols;
  const double width = cols * (pw + ml + 20);
  const double height = 40 + nrows * (ph + mb + 30);
  std::ostringstream svg;
  svg.precision(4);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const double x0 = static_cast<double>(k % cols) * (pw + ml + 20) + ml;
    const double y0 = 40 + static_cast<double>(k / cols) * (ph + mb + 30) + 20;
    auto ypos = [&](double v) { return y0 + ph - v / top * ph; };
    svg << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 - 6 << "\" text-anchor=\"middle\">"
        << sets[k] << "</text>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 + ph << "\" x2=\"" << x0 + pw << "\" y2=\""
        << y0 + ph << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y0 + ph
        << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = top * t / 4;
      svg << "<text x=\"" << x0 - 4 << "\" y=\"" << ypos(v) + 4 << "\" text-anchor=\"end\">" << v
          << "</text>\n";
    }
    const double slot = pw / static_cast<double>(strengths.size());
    for (std::size_t s = 0; s < strengths.size(); ++s) {
      const double cx = x0 + slot * (static_cast<double>(s) + 0.5);
      const double bw = slot * 0.5;
      for (const char* est : {"PLS", "PFGMM"}) {
        const auto& cell = bars[sets[k]][strengths[s]];
        const auto it = cell.find(est);
        if (it == cell.end() || std::isnan(it->second.mean)) continue;
        const Bar& b = it->second;
        const char* colour = std::string(est) == "PLS" ? kPls : kPfgmm;
        svg << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << ypos(b.mean) << "\" width=\"" << bw
            << "\" height=\"" << y0 + ph - ypos(b.mean) << "\" fill=\"" << colour << "\"/>\n";
        if (!std::isnan(b.se) && b.se > 0) {
          svg << "<line x1=\"" << cx << "\" y1=\"" << ypos(b.mean - b.se) << "\" x2=\"" << cx
              << "\" y2=\"" << ypos(b.mean + b.se) << "\" stroke=\"black\"/>\n";
        }
      }
      svg << "<text x=\"" << cx << "\" y=\"" << y0 + ph + 14 << "\" text-anchor=\"middle\">"
          << strengths[s] << "</text>\n";
    }
  }
  svg << "<rect x=\"" << width - 150 << "\" y=\"8\" width=\"10\" height=\"10\" fill=\"" << kPfgmm
      << "\"/><text x=\"" << width - 136 << "\" y=\"17\">PFGMM</text>\n";
  svg << "<rect x=\"" << width - 80 << "\" y=\"8\" width=\"10\" height=\"10\" fill=\"" << kPls
      << "\"/><text x=\"" << width - 66 << "\" y=\"17\">PLS</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string histogram_svg(const std::vector<int>& sizes, const std::string& title) {
  std::map<int, int> counts;
  for (int s : sizes) ++counts[s];
  const double w = 480;
  const double h = 260;
  const double ml = 40;
  const double top = 40;
  const double ph = h - top - 30;
  int peak = 1;
  for (const auto& [s, c] : counts) peak = std::max(peak, c);
  const double slot = (w - ml - 10) / std::max<std::size_t>(counts.size(), 1);
  std::ostringstream svg;
  svg.precision(4);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  std::size_t k = 0;
  for (const auto& [s, c] : counts) {
    const double bh = ph * c / peak;
    const double x = ml + slot * static_cast<double>(k++);
    svg << "<rect x=\"" << x + slot * 0.1 << "\" y=\"" << top + ph - bh << "\" width=\"" << slot * 0.8
        << "\" height=\"" << bh << "\" fill=\"" << kPfgmm << "\"/>\n";
    svg << "<text x=\"" << x + slot / 2 << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\">"
        << s << "</text>\n";
    svg << "<text x=\"" << x + slot / 2 << "\" y=\"" << top + ph - bh - 3
        << "\" text-anchor=\"middle\">" << c << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> write_report(const std::string& in_dir, const std::string& out_dir) {
  const fs::path in(in_dir);
  const fs::path out(out_dir);
  if (!fs::is_directory(in)) throw ConfigError("report input " + in_dir + " is not a directory");
  fs::create_directories(out);
  std::vector<std::string> written;
  std::ostringstream md;
  md << "# pfgmm run report\n";

  const fs::path manifest = in / "manifest.json";
  if (fs::exists(manifest)) {
    md << "\nRun manifest:\n\n```json\n" << read_file(manifest) << "```\n";
  }
  const fs::path fit = in / "fit.json";
  if (fs::exists(fit)) md << "\n## Fit\n\n```json\n" << read_file(fit) << "```\n";

  for (const char* name : {"summary", "table1", "table2", "table3"}) {
    const fs::path p = in / (std::string(name) + ".csv");
    if (!fs::exists(p)) continue;
    md << "\n## " << name << "\n\n" << markdown_table(read_text_csv(p.string()));
  }
  for (const char* name : {"fig1", "fig2", "fig3", "fig4"}) {
    const fs::path p = in / (std::string(name) + ".csv");
    if (!fs::exists(p)) continue;
    const TextTable t = read_text_csv(p.string());
    const std::string svg_name = std::string(name) + ".svg";
    std::ofstream(out / svg_name) << figure_svg(t, std::string("Mean |S| by endogeneity strength (") + name + ")");
    written.push_back(svg_name);
    md << "\n## " << name << "\n\n![" << name << "](" << svg_name << ")\n\n" << markdown_table(t);
  }
  const fs::path reps = in / "reps.csv";
  if (fs::exists(reps)) {
    const TextTable t = read_text_csv(reps.string());
    const int c = t.column("S_size");
    if (c < 0) throw DataError("reps.csv has no S_size column", 1);
    std::vector<int> sizes;
    for (const auto& row : t.rows) {
      const double v = cell_value(row[static_cast<std::size_t>(c)]);
      if (!std::isnan(v)) sizes.push_back(static_cast<int>(v));
    }
    std::ofstream(out / "active_size.svg") << histogram_svg(sizes, "Active set size over replications");
    written.push_back("active_size.svg");
    md << "\n## Active set sizes\n\n![active set sizes](active_size.svg)\n";
  }
  std::ofstream(out / "report.md") << md.str();
  written.push_back("report.md");
  return written;
}

}  // namespace pfgmm
