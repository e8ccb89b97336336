#include "perflab/io.hpp"

#include "perflab/csv.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>

namespace perflab {

CovariateTable load_covariates(const std::string& path, const std::optional<std::string>& label_column) {
  if (!std::filesystem::exists(path)) throw Error("covariate file '" + path + "' does not exist");
  NumericCsv csv = read_numeric_csv(path);
  CovariateTable table;
  Index label = -1;
  if (label_column) {
    for (std::size_t j = 0; j < csv.columns.size(); ++j)
      if (csv.columns[j] == *label_column) label = static_cast<Index>(j);
    if (label < 0) throw DomainError("'" + path + "' has no column named '" + *label_column + "'");
    table.labels = Vector(csv.values.col(label));
    table.label_column = *label_column;
  }
  const auto d = static_cast<Index>(csv.columns.size()) - (label >= 0 ? 1 : 0);
  if (d < 1) throw DomainError("'" + path + "' has no covariate columns");
  table.values.resize(csv.values.rows(), d);
  Index c = 0;
  for (Index j = 0; j < static_cast<Index>(csv.columns.size()); ++j) {
    if (j == label) continue;
    table.values.col(c++) = csv.values.col(j);
    table.columns.push_back(csv.columns[static_cast<std::size_t>(j)]);
  }
  return table;
}

void RunConfig::validate() const {
  if (jobs < 1) throw Error("--jobs must be at least 1");
  if (spec_path.empty()) throw Error("no spec file given");
  if (!std::filesystem::exists(spec_path)) throw Error("spec file '" + spec_path + "' does not exist");
}

std::uint64_t resolve_master_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("PERFLAB_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto res = std::from_chars(env, end, v);
    if (res.ec != std::errc() || res.ptr != end) throw Error(std::string("PERFLAB_SEED is not an unsigned integer: '") + env + "'");
    return v;
  }
  return fallback;
}

}  // namespace perflab
