#include "perflab/identify.hpp"

#include "perflab/csv.hpp"
#include "perflab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>

namespace perflab {

namespace {

bool is_full_support_noise(const PredictorWrapper& w) {
  const auto* n = std::get_if<NoiseWrapper>(&w);
  return n != nullptr && n->noise.has_full_support();
}

// Analytic verdicts exist for deterministic predictors and for predictors whose
// last randomizing step adds full-support noise.
bool analytic_supported(const Predictor& f) {
  if (f.is_deterministic()) return true;
  const auto& ws = f.wrappers();
  bool full = false;
  for (const auto& w : ws) {
    if (is_full_support_noise(w))
      full = true;
    else if (std::holds_alternative<DiscretizeWrapper>(w))
      full = false;
    else if (!std::get<NoiseWrapper>(w).noise.is_degenerate())
      full = false;
  }
  return full;
}

double sample_std(const Vector& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

struct CellGrid {
  Index marginals = 0;
  int bins = 0;
  std::vector<std::vector<double>> edges;  // interior quantile edges per marginal

  std::vector<int> locate(const RowVector& x) const {
    std::vector<int> idx(static_cast<std::size_t>(marginals));
    for (Index j = 0; j < marginals; ++j) {
      const auto& e = edges[static_cast<std::size_t>(j)];
      idx[static_cast<std::size_t>(j)] = static_cast<int>(std::upper_bound(e.begin(), e.end(), x[j]) - e.begin());
    }
    return idx;
  }
};

CellGrid make_grid(const Matrix& x, const OverlapConfig& config) {
  if (config.cells_per_marginal < 1 || config.max_cells < 1) throw DomainError("cell grid sizes must be positive");
  CellGrid g;
  const Index d = x.cols();
  const auto cells = [](int b, Index m) { return std::pow(static_cast<double>(b), static_cast<double>(m)); };
  g.bins = config.cells_per_marginal;
  while (g.bins > 2 && cells(g.bins, d) > config.max_cells) --g.bins;
  g.marginals = d;
  while (g.marginals > 1 && cells(g.bins, g.marginals) > config.max_cells) --g.marginals;
  for (Index j = 0; j < g.marginals; ++j) {
    std::vector<double> col(x.col(j).data(), x.col(j).data() + x.rows());
    std::sort(col.begin(), col.end());
    std::vector<double> e;
    for (int k = 1; k < g.bins; ++k) {
      const auto pos = static_cast<std::size_t>(std::floor(static_cast<double>(k) / g.bins * (col.size() - 1)));
      e.push_back(col[pos]);
    }
    g.edges.push_back(std::move(e));
  }
  return g;
}

std::string cell_id(const std::vector<int>& idx) {
  std::string s = "c";
  for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? "." : "") + std::to_string(idx[k]);
  return s;
}

}  // namespace

OverlapReport check_output_overlap(const Predictor& f_train, const Predictor& f_target, const CovariateSource& source,
                                   Index n_mc, const OverlapConfig& config) {
  if (n_mc < 100) throw DomainError("overlap check needs n_mc >= 100");
  if (f_train.input_dim() != source.dim() || f_target.input_dim() != source.dim())
    throw DimensionError("predictor and covariate dimensions differ");
  if (config.draws_per_point < 1) throw DomainError("draws_per_point must be >= 1");
  const SeedPlan plan(config.seed);
  Rng rx(plan.stream("overlap/x"));
  const Matrix x = source.sample(n_mc, rx).x;
  Rng rt(plan.stream("overlap/target"));
  const Vector target = f_target.predict(x, rt);
  for (Index i = 0; i < n_mc; ++i)
    if (!std::isfinite(target[i])) throw NonFiniteError("target predictor produced a non-finite value", static_cast<std::size_t>(i));

  OverlapReport report;
  bool analytic = false;
  if (config.method == OverlapMethod::automatic) {
    analytic = analytic_supported(f_train);
  } else if (config.method == OverlapMethod::analytic) {
    analytic = analytic_supported(f_train);
    if (!analytic) {
      report.fell_back = true;
      report.note = "analytic verdict unavailable for this training predictor; used empirical cells";
    }
  }
  report.method = analytic ? "analytic" : "empirical";

  const Index k = config.draws_per_point;
  Vector mass(n_mc);
  if (analytic) {
    const Vector base = f_train.deterministic(x);
    report.window = config.window_factor * sample_std(base);
    if (f_train.is_deterministic()) {
      for (Index i = 0; i < n_mc; ++i)
        mass[i] = std::abs(base[i] - target[i]) <= 1e-12 * std::max(1.0, std::abs(base[i])) ? 1.0 : 0.0;
    } else {
      mass.setOnes();
    }
  } else {
    Matrix rep(n_mc * k, x.cols());
    for (Index i = 0; i < n_mc; ++i) rep.middleRows(i * k, k).rowwise() = x.row(i);
    Rng rd(plan.stream("overlap/train"));
    const Vector draws = f_train.predict(rep, rd);
    double w = config.window_factor * sample_std(draws);
    if (!(w > 0.0)) w = 1e-9 * std::max(1.0, draws.cwiseAbs().maxCoeff());
    report.window = w;
    for (Index i = 0; i < n_mc; ++i) {
      Index hits = 0;
      for (Index r = 0; r < k; ++r) hits += std::abs(draws[i * k + r] - target[i]) <= w ? 1 : 0;
      mass[i] = static_cast<double>(hits) / static_cast<double>(k);
    }
  }

  const CellGrid grid = make_grid(x, config);
  std::map<std::vector<int>, OverlapCell> cells;
  for (Index i = 0; i < n_mc; ++i) {
    const auto idx = grid.locate(x.row(i));
    auto [it, fresh] = cells.try_emplace(idx);
    OverlapCell& c = it->second;
    if (fresh) {
      c.id = cell_id(idx);
      c.target_lo = c.target_hi = target[i];
      c.mass = mass[i];
    } else {
      c.mass = analytic ? std::min(c.mass, mass[i]) : c.mass + mass[i];
    }
    c.target_lo = std::min(c.target_lo, target[i]);
    c.target_hi = std::max(c.target_hi, target[i]);
    ++c.points;
  }
  report.passed = true;
  for (auto& [idx, c] : cells) {
    if (!analytic) c.mass /= static_cast<double>(c.points);
    c.positive = c.mass > 0.0;
    report.passed = report.passed && c.positive;
    report.cells.push_back(c);
  }
  return report;
}

std::vector<BasisFunction> linear_basis(Index dim) {
  std::vector<BasisFunction> basis;
  basis.emplace_back([](const Matrix& x) -> Vector { return Vector::Ones(x.rows()); });
  for (Index j = 0; j < dim; ++j) basis.emplace_back([j](const Matrix& x) -> Vector { return x.col(j); });
  return basis;
}

OverparamReport check_overparameterized(const Vector& values, const std::vector<BasisFunction>& basis,
                                        const Matrix& sample, double threshold) {
  const Index n = sample.rows();
  const auto k = static_cast<Index>(basis.size());
  if (values.size() != n) throw DimensionError("predictions and sample differ in length");
  if (k == 0) throw DomainError("basis is empty");
  if (n <= k) throw DomainError("sample size must exceed the basis size");
  const double norm = values.norm();
  if (!(norm > 0.0)) throw DomainError("predictor is identically zero on the sample");
  Matrix b(n, k);
  for (Index c = 0; c < k; ++c) {
    const Vector col = basis[static_cast<std::size_t>(c)](sample);
    if (col.size() != n || !col.allFinite()) throw DomainError("basis function " + std::to_string(c) + " is not finite on the sample");
    b.col(c) = col;
  }
  const auto sol = ols_minimum_norm(b, values);
  OverparamReport r;
  r.threshold = threshold;
  r.residual_ratio = std::clamp((values - b * sol.weights).norm() / norm, 0.0, 1.0);
  r.passed = r.residual_ratio > threshold;
  return r;
}

OverparamReport check_overparameterized(const Predictor& f_train, const std::vector<BasisFunction>& basis,
                                        const Matrix& sample, double threshold) {
  return check_overparameterized(f_train.deterministic(sample), basis, sample, threshold);
}

OverparamReport check_overparameterized(const Predictor& f_train, const std::vector<BasisFunction>& basis,
                                        const CovariateSource& source, Index n_sample, double threshold,
                                        std::uint64_t seed) {
  Rng rng(seed);
  const Matrix x = source.sample(n_sample, rng).x;
  return check_overparameterized(f_train, basis, x, threshold);
}

double round_significant(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  return std::strtod(buf, nullptr);
}

DiscreteReport check_discrete(const Vector& predictions, double continuity_fraction) {
  const Index n = predictions.size();
  if (n < 2) throw DomainError("discreteness check needs at least two predictions");
  std::map<double, Index> counts;
  for (Index i = 0; i < n; ++i) ++counts[round_significant(predictions[i])];
  DiscreteReport r;
  r.level_count = static_cast<Index>(counts.size());
  Index most = 0;
  for (const auto& [level, c] : counts) {
    r.levels.push_back(level);
    r.counts.push_back(c);
    most = std::max(most, c);
  }
  r.passed = r.level_count >= 2 && most < n &&
             static_cast<double>(r.level_count) <= continuity_fraction * static_cast<double>(n);
  return r;
}

DiscreteReport check_discrete(const Predictor& f_train, const CovariateSource& source, Index n_sample,
                              std::uint64_t seed, double continuity_fraction) {
  const SeedPlan plan(seed);
  Rng rx(plan.stream("discrete/x"));
  const Matrix x = source.sample(n_sample, rx).x;
  Rng rp(plan.stream("discrete/yhat"));
  return check_discrete(f_train.predict(x, rp), continuity_fraction);
}

namespace {
Matrix rdd_base_features(const Matrix& x, const HypothesisClass& cls) {
  if (cls.kind == ModelKind::linear) return x;
  if (cls.kind == ModelKind::polynomial) return expand_polynomial(x, cls.degree);
  throw DomainError("regression-discontinuity fit supports linear and polynomial base classes");
}
}  // namespace

Vector RDDFit::base_predict(const Matrix& x) const {
  Vector out = rdd_base_features(x, base_class) * base_weights;
  out.array() += base_intercept;
  return out;
}

Vector RDDFit::predict(const Matrix& x, const Vector& yhat) const {
  if (yhat.size() != x.rows()) throw DimensionError("predictions and covariates differ in length");
  Vector out = base_predict(x);
  for (Index i = 0; i < out.size(); ++i) out[i] += offsets[nearest_level(levels, yhat[i])];
  return out;
}

RDDFit rdd_identify(const Dataset& data, const HypothesisClass& base_class) {
  data.validate();
  const DiscreteReport disc = check_discrete(data.yhat);
  if (!disc.passed)
    throw DomainError("predictions are not discrete (" + std::to_string(disc.level_count) + " distinct values in " +
                      std::to_string(data.rows()) + " rows)");
  const Index need = data.dim() + 2;
  std::string thin;
  for (std::size_t k = 0; k < disc.levels.size(); ++k)
    if (disc.counts[k] < need)
      thin += (thin.empty() ? "" : "; ") + std::string("level ") + format_double(disc.levels[k]) + " has " +
              std::to_string(disc.counts[k]) + " rows";
  if (!thin.empty())
    throw DomainError("offsets unidentifiable, each level needs at least " + std::to_string(need) + " rows: " + thin);

  const Matrix base = rdd_base_features(data.x, base_class);
  const Index p = base.cols();
  const auto levels = static_cast<Index>(disc.levels.size());
  std::map<double, Index> level_index;
  for (Index k = 0; k < levels; ++k) level_index[disc.levels[static_cast<std::size_t>(k)]] = k;

  Matrix design = Matrix::Zero(data.rows(), p + levels);
  design.leftCols(p) = base;
  design.col(p).setOnes();
  for (Index i = 0; i < data.rows(); ++i) {
    const Index k = level_index.at(round_significant(data.yhat[i]));
    if (k > 0) design(i, p + k) = 1.0;
  }
  const auto sol = ols_minimum_norm(design, data.y);
  const Vector resid = data.y - design * sol.weights;
  const Index n = data.rows();
  const double sigma2 = n > sol.rank ? resid.squaredNorm() / static_cast<double>(n - sol.rank) : 0.0;
  const Vector var = sigma2 * gram_pseudoinverse(design).diagonal();

  RDDFit fit;
  fit.levels = disc.levels;
  fit.counts = disc.counts;
  fit.base_class = base_class;
  fit.base_class.include_prediction = false;
  fit.base_weights = sol.weights.head(p);
  fit.base_intercept = sol.weights[p];
  fit.rank_deficient = sol.rank_deficient;
  fit.offsets.push_back(0.0);
  fit.offset_std_errors.push_back(0.0);
  for (Index k = 1; k < levels; ++k) {
    fit.offsets.push_back(sol.weights[p + k]);
    fit.offset_std_errors.push_back(std::sqrt(std::max(var[p + k], 0.0)));
  }
  return fit;
}

std::pair<Vector, double> AnalyticLinearCase::member(double c) const {
  return {agnostic_weights - c * theta, c};
}

AnalyticLinearCase analytic_linear_case(const Vector& beta, double alpha, const Vector& theta) {
  if (beta.size() != theta.size()) throw DimensionError("beta and theta differ in dimension");
  return {beta + alpha * theta, theta};
}

void to_json(nlohmann::json& j, const RDDFit& f) {
  j = {{"levels", f.levels},
       {"offsets", f.offsets},
       {"offset_std_errors", f.offset_std_errors},
       {"counts", f.counts},
       {"base_class", f.base_class},
       {"base_weights", std::vector<double>(f.base_weights.data(), f.base_weights.data() + f.base_weights.size())},
       {"base_intercept", f.base_intercept},
       {"anchor", f.anchor},
       {"rank_deficient", f.rank_deficient}};
}

void to_json(nlohmann::json& j, const OverlapReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"cell", c.id},
                     {"target_interval", {c.target_lo, c.target_hi}},
                     {"training_mass", c.mass},
                     {"points", c.points},
                     {"verdict", c.positive ? "positive-mass" : "no-mass"}});
  j = {{"passed", r.passed},
       {"method", r.method},
       {"fell_back", r.fell_back},
       {"note", r.note},
       {"window", r.window},
       {"cell_procedure", "quantile grid over leading marginals, training predictor redrawn at each sampled x"},
       {"per_cell", cells}};
}

void to_json(nlohmann::json& j, const OverparamReport& r) {
  j = {{"residual_ratio", r.residual_ratio}, {"threshold", r.threshold}, {"passed", r.passed}};
}

void to_json(nlohmann::json& j, const DiscreteReport& r) {
  j = {{"passed", r.passed}, {"level_count", r.level_count}, {"levels", r.levels}, {"counts", r.counts}};
}

}  // namespace perflab
