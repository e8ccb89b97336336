#include "perflab/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace perflab {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  out.flush();
  if (!out) throw Error("write failed for '" + path + "'");
}

NumericCsv read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DomainError("'" + path + "' is empty");
  NumericCsv csv;
  for (auto& c : split(line)) csv.columns.push_back(trim(c));
  const std::size_t d = csv.columns.size();
  std::vector<double> cells;
  Index rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto parts = split(line);
    ++rows;
    if (parts.size() != d)
      throw DomainError("'" + path + "' row " + std::to_string(rows) + " has " + std::to_string(parts.size()) +
                        " cells, header has " + std::to_string(d));
    for (std::size_t j = 0; j < d; ++j) {
      const std::string cell = trim(parts[j]);
      double v = 0.0;
      const char* begin = cell.data();
      const char* end = begin + cell.size();
      if (!cell.empty() && *begin == '+') ++begin;
      const auto res = std::from_chars(begin, end, v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != end)
        throw DomainError("'" + path + "' row " + std::to_string(rows) + " column '" + csv.columns[j] +
                          "': non-numeric cell '" + cell + "'");
      if (!std::isfinite(v))
        throw DomainError("'" + path + "' row " + std::to_string(rows) + " column '" + csv.columns[j] +
                          "': non-finite value");
      cells.push_back(v);
    }
  }
  if (rows == 0) throw DomainError("'" + path + "' has no data rows");
  csv.values.resize(rows, static_cast<Index>(d));
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < static_cast<Index>(d); ++j) csv.values(i, j) = cells[static_cast<std::size_t>(i) * d + j];
  return csv;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_numeric_csv(const std::string& path, const std::vector<std::string>& columns, const Matrix& values) {
  if (static_cast<Index>(columns.size()) != values.cols())
    throw DimensionError("header has " + std::to_string(columns.size()) + " names for " +
                         std::to_string(values.cols()) + " columns");
  std::string text;
  for (std::size_t j = 0; j < columns.size(); ++j) text += (j ? "," : "") + columns[j];
  text += '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) text += ',';
      text += format_double(values(i, j));
    }
    text += '\n';
  }
  write_text_file(path, text);
}

}  // namespace perflab
