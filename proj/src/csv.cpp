#include "dsaqc/csv.hpp"

#include <fstream>
#include <sstream>

#include "dsaqc/errors.hpp"

namespace dsaqc::csv {

int Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t Table::require(std::string_view name, const std::string& origin) const {
  const int i = column(name);
  if (i < 0) throw SchemaError(origin + ": missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(i);
}

Row parse_line(std::string_view line) {
  Row out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    const std::string& f = row[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      out += f;
      continue;
    }
    out.push_back('"');
    for (char ch : f) {
      if (ch == '"') out.push_back('"');
      out.push_back(ch);
    }
    out.push_back('"');
  }
  return out;
}

Table parse(std::string_view text, const std::string& origin) {
  Table t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    Row row = parse_line(line);
    if (!have_header) {
      t.header = std::move(row);
      have_header = true;
    } else {
      if (row.size() != t.header.size()) {
        throw MalformedInputError(origin + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, got " +
                                  std::to_string(row.size()));
      }
      t.rows.push_back(std::move(row));
    }
    if (end == text.size()) break;
  }
  if (!have_header) throw MalformedInputError(origin + ": missing header line");
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw NotFoundError("no such file", path.string());
    throw IoError("cannot open for reading", path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string to_string(const Table& table) {
  std::string out = format_row(table.header) + "\n";
  for (const Row& r : table.rows) out += format_row(r) + "\n";
  return out;
}

void write(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path.string());
  out << to_string(table);
  if (!out) throw IoError("write failed", path.string());
}

}  // namespace dsaqc::csv
