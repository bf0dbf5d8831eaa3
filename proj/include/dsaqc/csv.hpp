#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dsaqc::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  /// Index of a header column, or -1 when absent.
  int column(std::string_view name) const;
  /// Like column() but throws SchemaError naming `origin` when absent.
  std::size_t require(std::string_view name, const std::string& origin = "<table>") const;
};

/// RFC-4180 style: double quotes around fields containing comma, quote or newline.
Row parse_line(std::string_view line);
std::string format_row(const Row& row);

/// Reads a file with a header line. Blank lines are skipped; ragged rows raise
/// MalformedInputError naming the line number.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text, const std::string& origin = "<memory>");

void write(const std::filesystem::path& path, const Table& table);
std::string to_string(const Table& table);

}  // namespace dsaqc::csv
