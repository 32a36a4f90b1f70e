#include "output.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unistd.h>

namespace driventop::cli {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);  // no "-0"
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void CsvTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns_.size()) throw std::logic_error("CSV row width does not match the header");
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  auto put_line = [&out](const auto& cells, auto&& fmt) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out += ',';
      out += fmt(cells[k]);
    }
    out += '\n';
  };
  put_line(columns_, [](const std::string& s) { return s; });
  for (const auto& row : rows_) {
    put_line(row, [](const Cell& c) {
      if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
      if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
      return std::get<std::string>(c);
    });
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace driventop::cli
