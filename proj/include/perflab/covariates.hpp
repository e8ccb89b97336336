#pragma once

#include "perflab/common.hpp"
#include "perflab/rng.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace perflab {

/// Rectangular numeric table, optionally carrying a label column split out of
/// the covariates.
struct CovariateTable {
  std::vector<std::string> columns;
  Matrix values;
  std::optional<Vector> labels;
  std::string label_column;

  Index rows() const { return values.rows(); }
  Index dim() const { return values.cols(); }
};

/// Covariate draws together with the table rows they came from (empty for
/// synthetic sources).
struct CovariateSample {
  Matrix x;
  std::vector<Index> rows;
};

/// The covariate distribution D_X: either independent Gaussians with the given
/// means and variances, or uniform resampling (with replacement) of table rows.
class CovariateSource {
 public:
  enum class Kind { synthetic_gaussian, table };

  static CovariateSource gaussian(Vector mean, Vector variance);
  static CovariateSource standard_normal(Index dim);
  static CovariateSource from_table(CovariateTable table);

  Kind kind() const { return kind_; }
  Index dim() const;
  const Vector& mean() const { return mean_; }
  const Vector& variance() const { return variance_; }
  const CovariateTable& table() const { return table_; }

  CovariateSample sample(Index n, Rng& rng) const;

  nlohmann::json describe() const;

 private:
  Kind kind_ = Kind::synthetic_gaussian;
  Vector mean_;
  Vector variance_;
  CovariateTable table_;
};

}  // namespace perflab
