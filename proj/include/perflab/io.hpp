#pragma once

#include "perflab/covariates.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace perflab {

/// Reads a numeric CSV with a header row. A named label column is split out of
/// the covariates. Errors name the file and, for bad cells, the row and column.
CovariateTable load_covariates(const std::string& path, const std::optional<std::string>& label_column = std::nullopt);

struct RunConfig {
  std::string command;
  std::string spec_path;
  std::string output_dir = ".";
  std::uint64_t master_seed = 0;
  int jobs = 1;

  /// Throws Error when the spec file is missing or jobs < 1.
  void validate() const;
};

/// The --seed flag if given, else $PERFLAB_SEED, else the fallback.
std::uint64_t resolve_master_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0);

}  // namespace perflab
