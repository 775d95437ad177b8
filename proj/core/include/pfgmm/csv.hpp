#pragma once

#include "pfgmm/lmm.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace pfgmm {

// Grouped data with header `group_id, y, x_1..x_p, z_1..z_q`. Rows of one group need
// not be contiguous; groups are ordered by first appearance and keep row order inside.
// Errors carry the 1-based line number (the header is line 1).
// `order`, if given, receives for each stacked row its 0-based position among the data rows.
GroupedDataset read_grouped_csv(const std::string& path, std::vector<int>* order = nullptr);
GroupedDataset parse_grouped_csv(std::istream& in, std::vector<int>* order = nullptr);

void write_grouped_csv(std::ostream& out, const GroupedDataset& ds);

// Plain numeric matrix, one row per line. A first line that does not parse as numbers
// is taken as a header and skipped.
Mat read_matrix_csv(const std::string& path);
Mat parse_matrix_csv(std::istream& in);

// Header plus rows of raw cells, for reading back tables this tool wrote.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name, or -1.
  int column(const std::string& name) const;
};

TextTable read_text_csv(const std::string& path);

}  // namespace pfgmm
