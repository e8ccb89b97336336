#include "perflab/estimators.hpp"

#include "perflab/linalg.hpp"
#include "perflab/predictors.hpp"
#include "perflab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace perflab {

NLOHMANN_JSON_SERIALIZE_ENUM(ModelKind, {{ModelKind::linear, "linear"},
                                         {ModelKind::polynomial, "polynomial"},
                                         {ModelKind::neural, "neural"},
                                         {ModelKind::logistic, "logistic"},
                                         {ModelKind::boosted_stumps, "boosted-stumps"}})

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

double sigmoid(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

void require_fit_data(const Dataset& data) {
  if (data.rows() == 0) throw DomainError("cannot fit on an empty dataset");
  if (data.rows() < 2) throw DomainError("fitting needs at least two rows");
  data.validate();
}

Index extra_columns(const HypothesisClass& c) {
  return (c.include_prediction ? 1 : 0) + (c.include_exposure ? 1 : 0);
}

// Design actually solved by least squares: polynomial kinds expand x.
Matrix ls_features(const Matrix& x, const Vector* yhat, const Vector* exposure, const HypothesisClass& cls) {
  const Matrix base = meta_features(x, yhat, exposure, cls);
  if (cls.kind != ModelKind::polynomial) return base;
  const Matrix poly = expand_polynomial(x, cls.degree);
  const Index extra = extra_columns(cls);
  Matrix out(x.rows(), poly.cols() + extra);
  out.leftCols(poly.cols()) = poly;
  out.rightCols(extra) = base.rightCols(extra);
  return out;
}

FittedModel fit_least_squares(const Dataset& data, const HypothesisClass& cls) {
  const Vector* exposure = data.exposure ? &*data.exposure : nullptr;
  const Matrix design = with_intercept(ls_features(data.x, &data.yhat, exposure, cls));
  const auto sol = ols_minimum_norm(design, data.y);
  FittedModel m;
  m.cls = cls;
  m.input_dim = data.dim();
  const Index p = design.cols() - 1;
  m.weights = sol.weights.head(p);
  m.intercept = sol.weights[p];
  const Vector resid = data.y - design * sol.weights;
  const double rss = resid.squaredNorm();
  const Index n = data.rows();
  m.diagnostics.final_risk = rss / static_cast<double>(n);
  m.diagnostics.iterations = 1;
  m.diagnostics.rank = sol.rank;
  m.diagnostics.rank_deficient = sol.rank_deficient;
  if (n > sol.rank) {
    const double sigma2 = rss / static_cast<double>(n - sol.rank);
    m.std_errors = (sigma2 * gram_pseudoinverse(design).diagonal().array()).sqrt().matrix();
  } else {
    m.std_errors = Vector::Constant(design.cols(), std::numeric_limits<double>::quiet_NaN());
  }
  return m;
}

}  // namespace

Matrix meta_features(const Matrix& x, const Vector* yhat, const Vector* exposure, const HypothesisClass& cls) {
  if (cls.include_prediction && yhat == nullptr) throw DimensionError("model needs the prediction column");
  if (cls.include_exposure && exposure == nullptr) throw DimensionError("model needs the exposure column G");
  const Index n = x.rows();
  Matrix out(n, x.cols() + extra_columns(cls));
  out.leftCols(x.cols()) = x;
  Index col = x.cols();
  if (cls.include_prediction) {
    if (yhat->size() != n) throw DimensionError("prediction column length differs from covariates");
    out.col(col++) = *yhat;
  }
  if (cls.include_exposure) {
    if (exposure->size() != n) throw DimensionError("exposure column length differs from covariates");
    out.col(col++) = *exposure;
  }
  return out;
}

Vector FittedModel::predict(const Matrix& x, const Vector* yhat, const Vector* exposure) const {
  if (x.cols() != input_dim)
    throw DimensionError("model expects " + std::to_string(input_dim) + " covariates, got " + std::to_string(x.cols()));
  switch (cls.kind) {
    case ModelKind::linear:
    case ModelKind::polynomial: {
      Vector out = ls_features(x, yhat, exposure, cls) * weights;
      out.array() += intercept;
      return out;
    }
    case ModelKind::logistic: {
      Vector t = meta_features(x, yhat, exposure, cls) * weights;
      t.array() += intercept;
      return t.unaryExpr([](double v) { return sigmoid(v); });
    }
    case ModelKind::neural:
      return net->predict(meta_features(x, yhat, exposure, cls));
    case ModelKind::boosted_stumps: {
      const Matrix f = meta_features(x, yhat, exposure, cls);
      Vector out = Vector::Constant(x.rows(), base_score);
      for (const auto& s : stumps)
        for (Index i = 0; i < f.rows(); ++i) out[i] += f(i, s.feature) <= s.threshold ? s.left : s.right;
      return out;
    }
  }
  throw DomainError("unknown model kind");
}

Vector FittedModel::predict(const Dataset& data) const {
  return predict(data.x, &data.yhat, data.exposure ? &*data.exposure : nullptr);
}

namespace {
Index extra_offset(const FittedModel& m) {
  if (m.cls.kind == ModelKind::neural || m.cls.kind == ModelKind::boosted_stumps)
    throw DomainError("coefficients are defined for linear-in-parameters models only");
  return m.weights.size() - extra_columns(m.cls);
}
}  // namespace

double FittedModel::yhat_coefficient() const {
  if (!cls.include_prediction) throw DomainError("model was fitted without the prediction column");
  return weights[extra_offset(*this)];
}

double FittedModel::exposure_coefficient() const {
  if (!cls.include_exposure) throw DomainError("model was fitted without the exposure column");
  return weights[extra_offset(*this) + (cls.include_prediction ? 1 : 0)];
}

Vector FittedModel::x_coefficients() const {
  if (cls.kind != ModelKind::linear && cls.kind != ModelKind::logistic)
    throw DomainError("x coefficients are defined for linear and logistic models");
  return weights.head(input_dim);
}

double FittedModel::yhat_std_error() const {
  if (!cls.include_prediction) throw DomainError("model was fitted without the prediction column");
  if (std_errors.size() == 0) throw DomainError("standard errors are available for least-squares kinds only");
  return std_errors[extra_offset(*this)];
}

FittedModel fit_meta_model(const Dataset& data, const HypothesisClass& cls) {
  require_fit_data(data);
  if (cls.include_exposure && !data.exposure) throw DimensionError("class uses G but the dataset has no exposure column");
  switch (cls.kind) {
    case ModelKind::linear:
    case ModelKind::polynomial:
      return fit_least_squares(data, cls);
    case ModelKind::neural: {
      const Vector* exposure = data.exposure ? &*data.exposure : nullptr;
      const Matrix f = meta_features(data.x, &data.yhat, exposure, cls);
      if (cls.include_exposure) throw DomainError("neural class does not take the exposure column");
      if (cls.restarts < 1) throw DomainError("neural class needs restarts >= 1");
      FittedModel m;
      m.cls = cls;
      m.input_dim = data.dim();
      m.diagnostics.final_risk = std::numeric_limits<double>::infinity();
      const SeedPlan inits(cls.train.init_seed);
      for (int k = 0; k < cls.restarts; ++k) {
        TrainConfig tc = cls.train;
        if (k > 0) tc.init_seed = inits.stream("restart", static_cast<std::uint64_t>(k));
        TrainReport report;
        NeuralNet net = fit_network(f, data.y, cls.units, tc, cls.include_prediction, &report);
        const double risk = (net.predict(f) - data.y).squaredNorm() / static_cast<double>(data.rows());
        m.diagnostics.iterations += report.epochs_run;
        if (risk < m.diagnostics.final_risk) {
          m.diagnostics.final_risk = risk;
          m.net = std::move(net);
        }
      }
      m.diagnostics.converged = true;
      return m;
    }
    case ModelKind::logistic: {
      FittedModel m = fit_logistic(data, cls.iterations, cls.step, cls.include_prediction);
      m.cls = cls;
      return m;
    }
    case ModelKind::boosted_stumps: {
      FittedModel m = fit_boosted_stumps(data, cls.rounds, cls.shrinkage, cls.include_prediction);
      m.cls = cls;
      return m;
    }
  }
  throw DomainError("unknown model kind");
}

double evaluate(const FittedModel& model, const Dataset& data, Metric metric) {
  if (data.dim() != model.input_dim)
    throw DimensionError("model takes " + std::to_string(model.input_dim) + " covariates, dataset has " +
                         std::to_string(data.dim()));
  if (data.rows() == 0) throw DomainError("cannot evaluate on an empty dataset");
  const Vector pred = model.predict(data);
  if (metric == Metric::rmse) return std::sqrt((pred - data.y).squaredNorm() / static_cast<double>(data.rows()));
  Index hits = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    if (data.y[i] != 0.0 && data.y[i] != 1.0) throw DomainError("accuracy needs binary 0/1 outcomes");
    hits += ((pred[i] >= 0.5 ? 1.0 : 0.0) == data.y[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows());
}

FittedModel fit_logistic(const Dataset& data, int iterations, double step, bool include_prediction) {
  require_fit_data(data);
  if (iterations < 1 || !(step > 0.0)) throw DomainError("logistic fit needs iterations >= 1 and step > 0");
  for (Index i = 0; i < data.rows(); ++i)
    if (!(data.y[i] >= 0.0 && data.y[i] <= 1.0)) throw DomainError("logistic targets must lie in [0, 1]");
  HypothesisClass cls;
  cls.kind = ModelKind::logistic;
  cls.include_prediction = include_prediction;
  cls.iterations = iterations;
  cls.step = step;
  const Matrix f = meta_features(data.x, &data.yhat, nullptr, cls);
  const Index n = f.rows();
  const Index p = f.cols();

  // Ascent runs on z-scored features; weights are mapped back to raw units.
  const Vector mean = f.colwise().mean().transpose();
  Vector scale(p);
  for (Index j = 0; j < p; ++j) {
    const double sd = std::sqrt((f.col(j).array() - mean[j]).square().mean());
    scale[j] = sd > 0.0 ? sd : 1.0;
  }
  const Matrix z = (f.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  Vector w = Vector::Zero(p);
  double b = 0.0;
  FitDiagnostics diag;
  diag.converged = false;
  const double nd = static_cast<double>(n);
  for (int it = 0; it < iterations; ++it) {
    Vector t = z * w;
    t.array() += b;
    const Vector resid = data.y - t.unaryExpr([](double v) { return sigmoid(v); });
    const Vector gw = z.transpose() * resid / nd;
    const double gb = resid.sum() / nd;
    diag.iterations = it + 1;
    if (std::sqrt(gw.squaredNorm() + gb * gb) < 1e-6) {
      diag.converged = true;
      break;
    }
    w += step * gw;
    b += step * gb;
  }
  FittedModel m;
  m.cls = cls;
  m.input_dim = data.dim();
  m.weights = w.cwiseQuotient(scale);
  m.intercept = b - m.weights.dot(mean);
  const Vector prob = m.predict(data);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double q = std::clamp(prob[i], 1e-15, 1.0 - 1e-15);
    loss -= data.y[i] * std::log(q) + (1.0 - data.y[i]) * std::log(1.0 - q);
  }
  diag.final_risk = loss / nd;
  diag.rank = p + 1;
  m.diagnostics = diag;
  return m;
}

FittedModel fit_boosted_stumps(const Dataset& data, int rounds, double shrinkage, bool include_prediction) {
  require_fit_data(data);
  if (rounds < 1 || !(shrinkage > 0.0 && shrinkage <= 1.0))
    throw DomainError("boosted stumps need rounds >= 1 and shrinkage in (0, 1]");
  HypothesisClass cls;
  cls.kind = ModelKind::boosted_stumps;
  cls.include_prediction = include_prediction;
  cls.rounds = rounds;
  cls.shrinkage = shrinkage;
  const Matrix f = meta_features(data.x, &data.yhat, nullptr, cls);
  const Index n = f.rows();
  const Index p = f.cols();

  std::vector<std::vector<Index>> order(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    auto& o = order[static_cast<std::size_t>(j)];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), Index{0});
    std::stable_sort(o.begin(), o.end(), [&](Index a, Index b) { return f(a, j) < f(b, j); });
  }

  FittedModel m;
  m.cls = cls;
  m.input_dim = data.dim();
  m.base_score = data.y.mean();
  Vector current = Vector::Constant(n, m.base_score);
  int done = 0;
  for (; done < rounds; ++done) {
    const Vector r = data.y - current;
    const double total = r.sum();
    double best_gain = -1.0;
    Stump best;
    for (Index j = 0; j < p; ++j) {
      const auto& o = order[static_cast<std::size_t>(j)];
      double left = 0.0;
      for (Index k = 0; k + 1 < n; ++k) {
        left += r[o[static_cast<std::size_t>(k)]];
        const double a = f(o[static_cast<std::size_t>(k)], j);
        const double c = f(o[static_cast<std::size_t>(k + 1)], j);
        if (!(a < c)) continue;
        const double nl = static_cast<double>(k + 1);
        const double nr = static_cast<double>(n - k - 1);
        const double gain = left * left / nl + (total - left) * (total - left) / nr;
        if (gain > best_gain) {
          best_gain = gain;
          best = {j, 0.5 * (a + c), left / nl, (total - left) / nr};
        }
      }
    }
    if (best_gain < 0.0) break;
    best.left *= shrinkage;
    best.right *= shrinkage;
    for (Index i = 0; i < n; ++i) current[i] += f(i, best.feature) <= best.threshold ? best.left : best.right;
    m.stumps.push_back(best);
  }
  m.diagnostics.iterations = done;
  m.diagnostics.final_risk = (data.y - current).squaredNorm() / static_cast<double>(n);
  return m;
}

OutcomeModel as_outcome_model(const FittedModel& model) {
  return [model](const Matrix& x, const Vector& yhat, const std::vector<Index>&, Rng&) {
    return model.predict(x, &yhat, nullptr);
  };
}

void to_json(nlohmann::json& j, const HypothesisClass& c) {
  j = {{"kind", c.kind},
       {"include_prediction", c.include_prediction},
       {"include_exposure", c.include_exposure}};
  switch (c.kind) {
    case ModelKind::polynomial:
      j["degree"] = c.degree;
      break;
    case ModelKind::neural:
      j["units"] = c.units;
      j["restarts"] = c.restarts;
      j["train"] = c.train;
      break;
    case ModelKind::boosted_stumps:
      j["rounds"] = c.rounds;
      j["shrinkage"] = c.shrinkage;
      break;
    case ModelKind::logistic:
      j["iterations"] = c.iterations;
      j["step"] = c.step;
      break;
    case ModelKind::linear:
      break;
  }
}

void from_json(const nlohmann::json& j, HypothesisClass& c) {
  HypothesisClass d;
  c.kind = j.value("kind", d.kind);
  c.include_prediction = j.value("include_prediction", d.include_prediction);
  c.include_exposure = j.value("include_exposure", d.include_exposure);
  c.degree = j.value("degree", d.degree);
  c.units = j.value("units", d.units);
  c.restarts = j.value("restarts", d.restarts);
  c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
  c.rounds = j.value("rounds", d.rounds);
  c.shrinkage = j.value("shrinkage", d.shrinkage);
  c.iterations = j.value("iterations", d.iterations);
  c.step = j.value("step", d.step);
  if (c.degree < 1) throw DomainError("polynomial degree must be >= 1");
  if (c.units < 1) throw DomainError("neural class needs at least one unit");
  if (c.restarts < 1) throw DomainError("neural class needs restarts >= 1");
}

void to_json(nlohmann::json& j, const FittedModel& m) {
  j = {{"class", m.cls}, {"input_dim", m.input_dim}};
  if (m.weights.size() > 0) {
    j["weights"] = to_std(m.weights);
    j["intercept"] = m.intercept;
  }
  if (m.std_errors.size() > 0) {
    nlohmann::json se = nlohmann::json::array();
    for (Index k = 0; k < m.std_errors.size(); ++k)
      se.push_back(std::isfinite(m.std_errors[k]) ? nlohmann::json(m.std_errors[k]) : nlohmann::json());
    j["std_errors"] = se;
  }
  if (m.net) j["network"] = *m.net;
  if (m.cls.kind == ModelKind::boosted_stumps) {
    j["base_score"] = m.base_score;
    nlohmann::json stumps = nlohmann::json::array();
    for (const auto& s : m.stumps) stumps.push_back({s.feature, s.threshold, s.left, s.right});
    j["stumps"] = stumps;
  }
  j["diagnostics"] = {{"final_risk", m.diagnostics.final_risk},
                      {"iterations", m.diagnostics.iterations},
                      {"rank_deficient", m.diagnostics.rank_deficient},
                      {"rank", m.diagnostics.rank},
                      {"converged", m.diagnostics.converged}};
}

void from_json(const nlohmann::json& j, FittedModel& m) {
  m.cls = j.at("class").get<HypothesisClass>();
  m.input_dim = j.at("input_dim").get<Index>();
  if (j.contains("weights")) {
    m.weights = from_std(j.at("weights").get<std::vector<double>>());
    m.intercept = j.at("intercept").get<double>();
  }
  if (j.contains("std_errors")) {
    const auto& se = j.at("std_errors");
    m.std_errors.resize(static_cast<Index>(se.size()));
    for (std::size_t k = 0; k < se.size(); ++k)
      m.std_errors[static_cast<Index>(k)] = se[k].is_null() ? std::numeric_limits<double>::quiet_NaN() : se[k].get<double>();
  }
  if (j.contains("network")) m.net = j.at("network").get<NeuralNet>();
  m.base_score = j.value("base_score", 0.0);
  m.stumps.clear();
  for (const auto& s : j.value("stumps", nlohmann::json::array()))
    m.stumps.push_back({s.at(0).get<Index>(), s.at(1).get<double>(), s.at(2).get<double>(), s.at(3).get<double>()});
  const auto& d = j.at("diagnostics");
  m.diagnostics.final_risk = d.value("final_risk", 0.0);
  m.diagnostics.iterations = d.value("iterations", 0);
  m.diagnostics.rank_deficient = d.value("rank_deficient", false);
  m.diagnostics.rank = d.value("rank", Index{0});
  m.diagnostics.converged = d.value("converged", true);
}

}  // namespace perflab
