#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace carbonmfg {

// Shortest decimal that round-trips; "inf", "-inf" and "nan" for the
// non-finite values.
std::string format_double(double x);

// Inverse of format_double. Throws kIO on anything else.
double parse_double(std::string_view text);

// RFC 4180 table with LF line endings. Fields are quoted only when needed.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row(std::vector<std::string> fields);
  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Parses what CsvTable::str produces (quoted fields included).
CsvTable parse_csv(std::string_view text);

// Writes atomically enough for our use: to a sibling temp file, then renamed.
// Throws kIO on failure.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace carbonmfg
