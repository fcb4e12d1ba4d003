#include "seedrecon/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>

#include "seedrecon/npy.hpp"

namespace seedrecon {

namespace {

std::vector<std::string> split_line(std::string_view line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::string cur;
  std::size_t i = 0;
  for (;;) {
    cur.clear();
    if (i < line.size() && line[i] == '"') {
      ++i;
      for (;;) {
        if (i >= line.size()) throw CsvError(lineno, "unterminated quoted field");
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        cur += line[i++];
      }
      if (i < line.size() && line[i] != ',') throw CsvError(lineno, "unexpected character after quoted field");
    } else {
      while (i < line.size() && line[i] != ',') {
        if (line[i] == '"') throw CsvError(lineno, "stray quote in unquoted field");
        cur += line[i++];
      }
    }
    fields.push_back(cur);
    if (i >= line.size()) break;
    ++i;  // comma
  }
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    rows.push_back({lineno, split_line(line, lineno)});
  }
  return rows;
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path, "read failed");
  return parse_csv(text);
}

double csv_double(const CsvRow& row, std::size_t col, const char* column_name) {
  if (col >= row.fields.size()) throw CsvError(row.line, std::string("missing column '") + column_name + "'");
  const std::string f = trim(row.fields[col]);
  double v = 0.0;
  auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc{} || end != f.data() + f.size() || !std::isfinite(v))
    throw CsvError(row.line, std::string("column '") + column_name + "': '" + row.fields[col] + "' is not a finite number");
  return v;
}

unsigned long long csv_u64(const CsvRow& row, std::size_t col, const char* column_name) {
  if (col >= row.fields.size()) throw CsvError(row.line, std::string("missing column '") + column_name + "'");
  const std::string f = trim(row.fields[col]);
  unsigned long long v = 0;
  auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc{} || end != f.data() + f.size())
    throw CsvError(row.line,
                   std::string("column '") + column_name + "': '" + row.fields[col] + "' is not an unsigned integer");
  return v;
}

}  // namespace seedrecon
