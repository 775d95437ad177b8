#include "pfgmm/csv.hpp"

#include "pfgmm/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace pfgmm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool to_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// Checks that names[from..to) read prefix_1, prefix_2, ...
bool numbered(const std::vector<std::string>& names, std::size_t from, std::size_t to,
              const std::string& prefix) {
  for (std::size_t k = from; k < to; ++k) {
    if (names[k] != prefix + std::to_string(k - from + 1)) return false;
  }
  return true;
}

std::ifstream open(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

}  // namespace

GroupedDataset parse_grouped_csv(std::istream& in, std::vector<int>* order) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: header row required", 1);
  const std::vector<std::string> header = split(line);
  if (header.size() < 3 || header[0] != "group_id" || header[1] != "y") {
    throw DataError("header must start with group_id,y", 1);
  }
  std::size_t first_z = header.size();
  for (std::size_t k = 2; k < header.size(); ++k) {
    if (header[k].rfind("z_", 0) == 0) {
      first_z = k;
      break;
    }
  }
  const int p = static_cast<int>(first_z - 2);
  const int q = static_cast<int>(header.size() - first_z);
  if (p < 1) throw DataError("need at least one x_ column", 1);
  if (!numbered(header, 2, first_z, "x_") || !numbered(header, first_z, header.size(), "z_")) {
    throw DataError("columns must be x_1..x_p followed by z_1..z_q", 1);
  }

  struct Row {
    int index;
    double y;
    std::vector<double> x;
    std::vector<double> z;
  };
  std::map<std::string, std::size_t> index;
  std::vector<std::string> labels;
  std::vector<std::vector<Row>> groups;
  long line_no = 1;
  int data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      throw DataError("expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(cells.size()),
                      line_no);
    }
    if (cells[0].empty()) throw DataError("empty group_id", line_no);
    Row row{data_rows++, 0.0, std::vector<double>(static_cast<std::size_t>(p)),
            std::vector<double>(static_cast<std::size_t>(q))};
    for (std::size_t k = 1; k < cells.size(); ++k) {
      double v = 0.0;
      if (!to_double(cells[k], v) || !std::isfinite(v)) {
        throw DataError("non-numeric value '" + cells[k] + "' in column " + header[k], line_no);
      }
      if (k == 1) {
        row.y = v;
      } else if (k < first_z) {
        row.x[k - 2] = v;
      } else {
        row.z[k - first_z] = v;
      }
    }
    auto [it, inserted] = index.emplace(cells[0], groups.size());
    if (inserted) {
      labels.push_back(cells[0]);
      groups.emplace_back();
    }
    groups[it->second].push_back(std::move(row));
  }
  if (groups.empty()) throw DataError("no data rows", line_no);

  int n = 0;
  std::vector<int> sizes;
  for (const auto& g : groups) {
    sizes.push_back(static_cast<int>(g.size()));
    n += sizes.back();
  }
  Vec y(n);
  Mat X(n, p);
  Mat Z(n, q);
  int r = 0;
  if (order) order->assign(static_cast<std::size_t>(n), 0);
  for (const auto& g : groups) {
    for (const Row& row : g) {
      if (order) (*order)[static_cast<std::size_t>(r)] = row.index;
      y(r) = row.y;
      for (int j = 0; j < p; ++j) X(r, j) = row.x[static_cast<std::size_t>(j)];
      for (int j = 0; j < q; ++j) Z(r, j) = row.z[static_cast<std::size_t>(j)];
      ++r;
    }
  }
  return GroupedDataset(std::move(y), std::move(X), std::move(Z), std::move(sizes),
                        std::move(labels));
}

GroupedDataset read_grouped_csv(const std::string& path, std::vector<int>* order) {
  std::ifstream in = open(path);
  return parse_grouped_csv(in, order);
}

void write_grouped_csv(std::ostream& out, const GroupedDataset& ds) {
  out << "group_id,y";
  for (int j = 1; j <= ds.p(); ++j) out << ",x_" << j;
  for (int j = 1; j <= ds.q(); ++j) out << ",z_" << j;
  out << '\n' << std::setprecision(17);
  for (int g = 0; g < ds.num_groups(); ++g) {
    const std::string label = g < static_cast<int>(ds.group_labels().size())
                                  ? ds.group_labels()[static_cast<std::size_t>(g)]
                                  : std::to_string(g + 1);
    for (int i = ds.offset(g); i < ds.offset(g) + ds.size(g); ++i) {
      out << label << ',' << ds.y()(i);
      for (int j = 0; j < ds.p(); ++j) out << ',' << ds.X()(i, j);
      for (int j = 0; j < ds.q(); ++j) out << ',' << ds.Z()(i, j);
      out << '\n';
    }
  }
}

Mat parse_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& c : cells) {
      double v = 0.0;
      if (!to_double(c, v) || !std::isfinite(v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;
      throw DataError("non-numeric matrix entry", line_no);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("ragged matrix row", line_no);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("matrix file has no rows");
  Mat M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return M;
}

int TextTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return static_cast<int>(k);
  }
  return -1;
}

TextTable read_text_csv(const std::string& path) {
  std::ifstream in = open(path);
  TextTable table;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) throw DataError("ragged row in " + path, line_no);
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw DataError("empty table " + path, 1);
  return table;
}

Mat read_matrix_csv(const std::string& path) {
  std::ifstream in = open(path);
  return parse_matrix_csv(in);
}

}  // namespace pfgmm
