#pragma once

#include "perflab/common.hpp"

#include <string>
#include <vector>

namespace perflab {

/// Header plus an all-numeric body.
struct NumericCsv {
  std::vector<std::string> columns;
  Matrix values;
};

/// Reads a comma-separated file with one header row. Every body cell must parse
/// as a finite number; failures name the 1-based data row and the column.
NumericCsv read_numeric_csv(const std::string& path);

void write_numeric_csv(const std::string& path, const std::vector<std::string>& columns, const Matrix& values);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Writes `text` to `path`, throwing Error with the path on failure.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace perflab
