#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seedrecon {

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct CsvRow {
  std::size_t line = 0;  // 1-based
  std::vector<std::string> fields;
};

// RFC 4180 subset: comma separated, optional double quotes with "" escapes,
// LF or CRLF line ends. Blank lines are skipped. Quoted fields may not span
// lines.
std::vector<CsvRow> parse_csv(std::string_view text);
// Throws IoError when the file cannot be read.
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

// Whole-field numeric parse; throws CsvError naming the line and column.
double csv_double(const CsvRow& row, std::size_t col, const char* column_name);
unsigned long long csv_u64(const CsvRow& row, std::size_t col, const char* column_name);

}  // namespace seedrecon
