// CSV tables with reproducible number formatting and atomic file writes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace driventop::cli {

inline constexpr int kSchemaVersion = 1;

using Cell = std::variant<double, std::int64_t, std::string>;

/// Doubles with 17 significant digits ("nan", "inf", "-inf" for non-finite).
std::string format_double(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  void add_row(std::vector<Cell> row);
  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t rows() const { return rows_.size(); }
  /// Header plus rows, comma separated, LF line endings.
  std::string str() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

/// Writes to a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace driventop::cli
