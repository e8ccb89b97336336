#include "perflab/predictors.hpp"

#include "perflab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace perflab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

void check_dim(const Matrix& x, Index expected) {
  if (x.cols() != expected)
    throw DimensionError("predictor expects " + std::to_string(expected) + " covariates, got " +
                         std::to_string(x.cols()));
}

void append_terms(Index dim, int remaining, int first, std::vector<int>& prefix,
                  std::vector<std::vector<int>>& out) {
  if (remaining == 0) {
    out.push_back(prefix);
    return;
  }
  for (int j = first; j < static_cast<int>(dim); ++j) {
    prefix.push_back(j);
    append_terms(dim, remaining - 1, j, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> polynomial_terms(Index dim, int degree) {
  std::vector<std::vector<int>> terms;
  std::vector<int> prefix;
  for (int k = 1; k <= degree; ++k) append_terms(dim, k, 0, prefix, terms);
  return terms;
}

Matrix expand_polynomial(const Matrix& x, int degree) {
  const auto terms = polynomial_terms(x.cols(), degree);
  Matrix out(x.rows(), static_cast<Index>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    Vector col = x.col(terms[t][0]);
    for (std::size_t k = 1; k < terms[t].size(); ++k) col.array() *= x.col(terms[t][k]).array();
    out.col(static_cast<Index>(t)) = col;
  }
  return out;
}

std::string Predictor::kind() const {
  std::string base = std::visit(overloaded{[](const LinearModel&) { return std::string("linear"); },
                                           [](const PolynomialModel&) { return std::string("polynomial"); },
                                           [](const NeuralModel&) { return std::string("neural"); }},
                                base_);
  return wrappers_.empty() ? base : "composed(" + base + ")";
}

Index Predictor::input_dim() const {
  return std::visit(overloaded{[](const LinearModel& m) { return m.weights.size(); },
                               [](const PolynomialModel& m) { return m.input_dim; },
                               [](const NeuralModel& m) { return m.net.input_dim(); }},
                    base_);
}

bool Predictor::is_deterministic() const {
  return std::all_of(wrappers_.begin(), wrappers_.end(), [](const PredictorWrapper& w) {
    const auto* noise = std::get_if<NoiseWrapper>(&w);
    return noise == nullptr || noise->noise.is_degenerate();
  });
}

Predictor Predictor::with_wrapper(PredictorWrapper w) const {
  Predictor p = *this;
  p.wrappers_.push_back(std::move(w));
  return p;
}

const LinearModel& Predictor::linear() const {
  const auto* m = std::get_if<LinearModel>(&base_);
  if (!m) throw DomainError("predictor '" + id_ + "' is not linear");
  return *m;
}

Vector Predictor::base_predict(const Matrix& x) const {
  check_dim(x, input_dim());
  return std::visit(
      overloaded{[&](const LinearModel& m) -> Vector {
                   Vector out = x * m.weights;
                   out.array() += m.intercept;
                   return out;
                 },
                 [&](const PolynomialModel& m) -> Vector {
                   Vector out = expand_polynomial(x, m.degree) * m.weights;
                   out.array() += m.intercept;
                   return out;
                 },
                 [&](const NeuralModel& m) -> Vector { return m.net.predict(x); }},
      base_);
}

Vector Predictor::apply(const Matrix& x, Rng* rng) const {
  Vector out = base_predict(x);
  for (const auto& w : wrappers_) {
    if (const auto* noise = std::get_if<NoiseWrapper>(&w)) {
      if (rng == nullptr || noise->noise.is_degenerate()) continue;
      for (Index i = 0; i < out.size(); ++i) out[i] += noise->noise.sample(*rng);
    } else {
      const auto& levels = std::get<DiscretizeWrapper>(w).levels;
      for (Index i = 0; i < out.size(); ++i) out[i] = levels[nearest_level(levels, out[i])];
    }
  }
  return out;
}

Vector Predictor::predict(const Matrix& x, Rng& rng) const { return apply(x, &rng); }

Vector Predictor::deterministic(const Matrix& x) const { return apply(x, nullptr); }

std::size_t nearest_level(const std::vector<double>& levels, double value) {
  const auto it = std::lower_bound(levels.begin(), levels.end(), value);
  if (it == levels.begin()) return 0;
  if (it == levels.end()) return levels.size() - 1;
  const auto hi = static_cast<std::size_t>(it - levels.begin());
  const std::size_t lo = hi - 1;
  return (value - levels[lo] <= levels[hi] - value) ? lo : hi;
}

std::vector<double> quantile_levels(const Vector& values, int count) {
  if (count < 2) throw DomainError("need at least two levels");
  if (values.size() < count) throw DomainError("calibration sample smaller than level count");
  std::vector<double> sorted = to_std(values);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> levels;
  const auto n = static_cast<double>(sorted.size());
  for (int k = 0; k < count; ++k) {
    const double pos = (k + 0.5) / count * n - 0.5;
    const auto lo = static_cast<std::size_t>(std::floor(std::max(pos, 0.0)));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = std::clamp(pos - static_cast<double>(lo), 0.0, 1.0);
    levels.push_back(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
  }
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (!(levels[k] > levels[k - 1])) throw DomainError("calibration sample has too few distinct values");
  return levels;
}

Predictor wrap_noise(const Predictor& base, const NoiseSpec& noise) {
  NoiseSpec n = noise;
  n.applies_to = NoiseTarget::prediction;
  return base.with_wrapper(NoiseWrapper{n});
}

Predictor wrap_discretize(const Predictor& base, std::vector<double> levels) {
  if (levels.size() < 2) throw DomainError("discretization needs at least two levels");
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (!(levels[k] > levels[k - 1])) throw DomainError("discretization levels must be strictly increasing");
  return base.with_wrapper(DiscretizeWrapper{std::move(levels)});
}

Predictor make_linear_predictor(Vector weights, double intercept, std::string id) {
  return Predictor(std::move(id), LinearModel{std::move(weights), intercept});
}

Predictor make_polynomial_predictor(Index dim, int degree, Vector weights, double intercept,
                                    std::string id) {
  const auto terms = polynomial_terms(dim, degree);
  if (static_cast<Index>(terms.size()) != weights.size())
    throw DimensionError("degree-" + std::to_string(degree) + " expansion of " + std::to_string(dim) +
                         " covariates has " + std::to_string(terms.size()) + " terms, got " +
                         std::to_string(weights.size()) + " weights");
  return Predictor(std::move(id), PolynomialModel{dim, degree, std::move(weights), intercept});
}

Predictor fit_linear_predictor(const Matrix& covariates, const Vector& labels, const FitOptions& options) {
  if (covariates.rows() != labels.size()) throw DimensionError("covariates and labels differ in length");
  if (covariates.rows() <= covariates.cols() && !options.allow_minimum_norm)
    throw DomainError("need n > d to fit a linear predictor (n = " + std::to_string(covariates.rows()) +
                      ", d = " + std::to_string(covariates.cols()) + ")");
  const auto sol = ols_minimum_norm(with_intercept(covariates), labels);
  const Index d = covariates.cols();
  return make_linear_predictor(sol.weights.head(d), sol.weights[d],
                               options.id.empty() ? "linear" : options.id);
}

Vector shuffle_labels(const Vector& labels, const ShuffleSpec& spec) {
  if (!(spec.fraction >= 0.0 && spec.fraction <= 1.0)) throw DomainError("shuffle fraction must lie in [0, 1]");
  if (spec.flip_gamma && !(*spec.flip_gamma >= 0.0 && *spec.flip_gamma <= 0.5))
    throw DomainError("flip_gamma must lie in [0, 0.5]");
  Vector out = labels;
  Rng rng(spec.seed);
  if (spec.fraction > 0.0) {
    std::vector<Index> chosen;
    for (Index i = 0; i < out.size(); ++i)
      if (spec.fraction >= 1.0 || rng.uniform() < spec.fraction) chosen.push_back(i);
    std::vector<double> pool;
    pool.reserve(chosen.size());
    for (Index i : chosen) pool.push_back(out[i]);
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng.below(i)]);
    for (std::size_t k = 0; k < chosen.size(); ++k) out[chosen[k]] = pool[k];
  }
  if (spec.flip_gamma) {
    for (Index i = 0; i < out.size(); ++i) {
      if (out[i] != 0.0 && out[i] != 1.0) throw DomainError("label flipping needs binary 0/1 labels");
      if (rng.uniform() < *spec.flip_gamma) out[i] = 1.0 - out[i];
    }
  }
  return out;
}

Predictor make_test_predictor(const Matrix& covariates, const Vector& labels, const ShuffleSpec& spec,
                              const FitOptions& options) {
  FitOptions o = options;
  if (o.id.empty()) o.id = "test-linear";
  return fit_linear_predictor(covariates, shuffle_labels(labels, spec), o);
}

Predictor interpolate(const Predictor& theta, const Predictor& phi, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("rho must lie in [0, 1]");
  const LinearModel& a = theta.linear();
  const LinearModel& b = phi.linear();
  if (a.weights.size() != b.weights.size()) throw DimensionError("interpolated predictors differ in dimension");
  return make_linear_predictor(rho * a.weights + (1.0 - rho) * b.weights,
                               rho * a.intercept + (1.0 - rho) * b.intercept, "interpolated");
}

Predictor fit_overparam_predictor(const Matrix& covariates, const Vector& labels, int degree,
                                  const FitOptions& options) {
  if (degree < 2) throw DomainError("overparameterized predictor needs degree >= 2");
  if (covariates.rows() != labels.size()) throw DimensionError("covariates and labels differ in length");
  const auto terms = polynomial_terms(covariates.cols(), degree);
  if (static_cast<Index>(terms.size()) > options.max_features)
    throw DomainError("degree-" + std::to_string(degree) + " expansion has " + std::to_string(terms.size()) +
                      " features, above the cap of " + std::to_string(options.max_features));
  const Matrix expanded = expand_polynomial(covariates, degree);
  if (expanded.rows() <= expanded.cols() && !options.allow_minimum_norm)
    throw DomainError("need more rows than expanded features");
  const auto sol = ols_minimum_norm(with_intercept(expanded), labels);
  const Index k = expanded.cols();
  return make_polynomial_predictor(covariates.cols(), degree, sol.weights.head(k), sol.weights[k],
                                   options.id.empty() ? "polynomial" : options.id);
}

Predictor fit_neural_predictor(const Matrix& covariates, const Vector& labels, Index units,
                               const TrainConfig& config, TrainReport* report) {
  NeuralModel m{fit_network(covariates, labels, units, config, false, report)};
  return Predictor("neural-" + std::to_string(units), std::move(m));
}

void to_json(nlohmann::json& j, const Predictor& p) {
  j = nlohmann::json::object();
  j["id"] = p.id();
  std::visit(overloaded{[&](const LinearModel& m) {
                          j["kind"] = "linear";
                          j["weights"] = to_std(m.weights);
                          j["intercept"] = m.intercept;
                        },
                        [&](const PolynomialModel& m) {
                          j["kind"] = "polynomial";
                          j["input_dim"] = m.input_dim;
                          j["degree"] = m.degree;
                          j["weights"] = to_std(m.weights);
                          j["intercept"] = m.intercept;
                        },
                        [&](const NeuralModel& m) {
                          j["kind"] = "neural";
                          j["network"] = m.net;
                        }},
             p.base());
  nlohmann::json wrappers = nlohmann::json::array();
  for (const auto& w : p.wrappers()) {
    if (const auto* noise = std::get_if<NoiseWrapper>(&w))
      wrappers.push_back({{"type", "noise"}, {"noise", noise->noise}});
    else
      wrappers.push_back({{"type", "discretize"}, {"levels", std::get<DiscretizeWrapper>(w).levels}});
  }
  j["wrappers"] = wrappers;
}

void from_json(const nlohmann::json& j, Predictor& p) {
  const std::string kind = j.at("kind").get<std::string>();
  const std::string id = j.value("id", kind);
  if (kind == "linear") {
    p = make_linear_predictor(from_std(j.at("weights").get<std::vector<double>>()),
                              j.at("intercept").get<double>(), id);
  } else if (kind == "polynomial") {
    p = make_polynomial_predictor(j.at("input_dim").get<Index>(), j.at("degree").get<int>(),
                                  from_std(j.at("weights").get<std::vector<double>>()),
                                  j.at("intercept").get<double>(), id);
  } else if (kind == "neural") {
    p = Predictor(id, NeuralModel{j.at("network").get<NeuralNet>()});
  } else {
    throw DomainError("unknown predictor kind '" + kind + "'");
  }
  for (const auto& w : j.value("wrappers", nlohmann::json::array())) {
    const std::string type = w.at("type").get<std::string>();
    if (type == "noise")
      p = wrap_noise(p, w.at("noise").get<NoiseSpec>());
    else if (type == "discretize")
      p = wrap_discretize(p, w.at("levels").get<std::vector<double>>());
    else
      throw DomainError("unknown predictor wrapper '" + type + "'");
  }
}

}  // namespace perflab
