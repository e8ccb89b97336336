#include "perflab/covariates.hpp"

#include <cmath>

namespace perflab {

CovariateSource CovariateSource::gaussian(Vector mean, Vector variance) {
  if (mean.size() == 0) throw DimensionError("covariate dimension must be positive");
  if (mean.size() != variance.size()) throw DimensionError("mean and variance lengths differ");
  for (Index j = 0; j < variance.size(); ++j) {
    if (!(variance[j] >= 0.0) || !std::isfinite(variance[j]) || !std::isfinite(mean[j]))
      throw DomainError("covariate variances must be finite and >= 0");
  }
  CovariateSource s;
  s.kind_ = Kind::synthetic_gaussian;
  s.mean_ = std::move(mean);
  s.variance_ = std::move(variance);
  return s;
}

CovariateSource CovariateSource::standard_normal(Index dim) {
  return gaussian(Vector::Zero(dim), Vector::Ones(dim));
}

CovariateSource CovariateSource::from_table(CovariateTable table) {
  if (table.rows() == 0 || table.dim() == 0) throw DomainError("covariate table is empty");
  if (!table.values.allFinite()) throw DomainError("covariate table has non-finite entries");
  CovariateSource s;
  s.kind_ = Kind::table;
  s.table_ = std::move(table);
  return s;
}

Index CovariateSource::dim() const {
  return kind_ == Kind::table ? table_.dim() : mean_.size();
}

CovariateSample CovariateSource::sample(Index n, Rng& rng) const {
  CovariateSample out;
  const Index d = dim();
  out.x.resize(n, d);
  if (kind_ == Kind::synthetic_gaussian) {
    const Vector sd = variance_.cwiseSqrt();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) out.x(i, j) = mean_[j] + sd[j] * rng.normal();
  } else {
    out.rows.resize(static_cast<std::size_t>(n));
    const auto m = static_cast<std::uint64_t>(table_.rows());
    for (Index i = 0; i < n; ++i) {
      const auto r = static_cast<Index>(rng.below(m));
      out.rows[static_cast<std::size_t>(i)] = r;
      out.x.row(i) = table_.values.row(r);
    }
  }
  return out;
}

nlohmann::json CovariateSource::describe() const {
  if (kind_ == Kind::table) {
    return {{"kind", "table"}, {"rows", table_.rows()}, {"dim", table_.dim()},
            {"columns", table_.columns}};
  }
  return {{"kind", "synthetic-gaussian"},
          {"dim", mean_.size()},
          {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"variance", std::vector<double>(variance_.data(), variance_.data() + variance_.size())},
          {"synthetic_stand_in", true}};
}

}  // namespace perflab
