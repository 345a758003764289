#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mfg::io {

/// 17 significant digits (round-trip exact); NaN becomes an empty cell.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const;
  /// Column index by name; throws std::out_of_range when absent.
  std::size_t column(const std::string& name) const;
  /// Numeric column, empty cells read as NaN.
  std::vector<double> numbers(const std::string& name) const;
};

/// Writes to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace mfg::io
