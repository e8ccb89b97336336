#include "perflab/experiments.hpp"

#include "perflab/csv.hpp"
#include "perflab/io.hpp"
#include "perflab/predictors.hpp"
#include "perflab/scm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace perflab {

namespace {

using json = nlohmann::json;

const std::vector<std::string> kConditions = {"with-yhat", "without-yhat", "baseline"};

struct TemplateInfo {
  std::vector<std::string> sweep_parameters;  // first is the default
  std::vector<double> default_values;
};

const std::map<std::string, TemplateInfo>& templates() {
  static const std::map<std::string, TemplateInfo> t = {
      {"fig3a-noniden", {{"alpha"}, {0.0, 0.25, 0.5, 0.75, 1.0}}},
      {"fig3b-random", {{"alpha"}, {0.0, 0.25, 0.5, 0.75, 1.0}}},
      {"fig3c-overparam", {{"alpha"}, {0.0, 0.25, 0.5, 0.75, 1.0}}},
      {"fig3d-discrete", {{"alpha"}, {0.0, 0.25, 0.5, 0.75, 1.0}}},
      {"fig4a-width-sweep", {{"m_theta"}, {1, 2, 3, 4, 8, 16}}},
      {"fig4b-noise-sweep", {{"noise_scale"}, {0.0, 0.01, 0.05, 0.1, 0.5, 1.0}}},
      {"fig5a-trainsize-sweep", {{"n_train"}, {500, 2000, 10000, 50000}}},
      {"fig5b-trainsize-sweep", {{"n_train"}, {500, 2000, 10000, 50000}}},
      {"fig5c-shift-sweep", {{"rho"}, {1.0, 0.8, 0.6, 0.4, 0.2, 0.0}}},
      {"appD-misspec", {{"p", "gamma"}, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}}},
  };
  return t;
}

const TemplateInfo& template_info(const std::string& name) {
  const auto it = templates().find(name);
  if (it == templates().end()) throw SpecError("/template", "unknown template '" + name + "'");
  return it->second;
}

bool is_integer_parameter(const std::string& p) { return p == "m_theta" || p == "n_train"; }

void set_parameter(ExperimentSpec& s, const std::string& name, double v) {
  if (name == "alpha") s.alpha = v;
  else if (name == "m_theta") s.m_theta = static_cast<Index>(v);
  else if (name == "noise_scale") s.noise_scale = v;
  else if (name == "n_train") s.n_train = static_cast<Index>(v);
  else if (name == "rho") s.rho = v;
  else if (name == "p") s.p = v;
  else if (name == "gamma") s.gamma = v;
  else throw SpecError("/sweep/parameter", "unknown sweep parameter '" + name + "'");
}

std::vector<double> default_beta(Index d) {
  static const double pattern[] = {2.0, -1.5, 1.0, -0.5, 0.5};
  std::vector<double> b;
  for (Index j = 0; j < d; ++j) b.push_back(pattern[j % 5]);
  return b;
}

// ---------------------------------------------------------------- reference

struct ReferenceData {
  Matrix x;
  Vector y;
};

Vector reference_signal(const ReferenceTask& ref, const Matrix& x) {
  const Index d = x.cols();
  const std::vector<double> beta = ref.beta.empty() ? default_beta(d) : ref.beta;
  if (static_cast<Index>(beta.size()) != d) throw SpecError("/reference/beta", "length differs from covariate dimension");
  Vector out = x * Eigen::Map<const Vector>(beta.data(), d);
  out.array() += ref.intercept;
  if (ref.quad != 0.0)
    for (Index j = 0; j + 1 < d; ++j)
      out += (j % 2 == 0 ? ref.quad : -ref.quad) * x.col(j).cwiseProduct(x.col(j + 1));
  if (ref.ridge != 0.0) {
    const Vector v = x.rowwise().sum() / std::sqrt(static_cast<double>(d));
    out += ref.ridge * (ref.slope * v).array().tanh().matrix();
  }
  return out;
}

ReferenceData make_reference(const ExperimentSpec& spec, const CovariateSource& source, const SeedPlan& seeds) {
  ReferenceData ref;
  Rng rx(seeds.stream("reference/x"));
  const CovariateSample s = source.sample(spec.reference.n, rx);
  ref.x = s.x;
  if (source.kind() == CovariateSource::Kind::table && source.table().labels) {
    ref.y.resize(spec.reference.n);
    for (Index i = 0; i < spec.reference.n; ++i) ref.y[i] = (*source.table().labels)[s.rows[static_cast<std::size_t>(i)]];
    return ref;
  }
  ref.y = reference_signal(spec.reference, ref.x);
  Rng ry(seeds.stream("reference/y"));
  for (Index i = 0; i < ref.y.size(); ++i) ref.y[i] += spec.reference.noise * ry.normal();
  return ref;
}

TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
  c.init_seed = seed;
  return c;
}

HypothesisClass meta_class_for(const ExperimentSpec& spec) {
  if (spec.meta_class) return *spec.meta_class;
  if (spec.template_name == "fig4a-width-sweep") {
    HypothesisClass c;
    c.kind = ModelKind::neural;
    c.units = spec.m_g;
    c.restarts = 6;
    c.train = spec.train;
    return c;
  }
  return HypothesisClass::linear(true);
}

HypothesisClass with_prediction(HypothesisClass c, bool on, std::uint64_t seed) {
  c.include_prediction = on;
  c.include_exposure = false;
  c.train.init_seed = seed;
  return c;
}

double yhat_coefficient_of(const FittedModel& m) {
  if (m.cls.kind == ModelKind::neural) return m.net->raw_skip_coefficient();
  if (m.cls.kind == ModelKind::boosted_stumps) return std::numeric_limits<double>::quiet_NaN();
  return m.yhat_coefficient();
}

using Metrics = std::vector<std::pair<std::string, double>>;

// Objects shared by all sweep values of one replicate.
struct ReplicateContext {
  ReferenceData ref;
  BaseFunction g1;
  Predictor theta_linear;
  Predictor phi;
  // Baseline RMSE keyed by the parameters it depends on; the other sweep
  // parameters leave it unchanged.
  std::map<std::string, double> baseline;
};

ReplicateContext prepare_regression(const ExperimentSpec& spec, const CovariateSource& source, const SeedPlan& seeds) {
  ReplicateContext ctx;
  ctx.ref = make_reference(spec, source, seeds);
  if (spec.template_name == "fig4a-width-sweep") {
    ctx.g1 = NeuralBase{fit_network(ctx.ref.x, ctx.ref.y, spec.m_g, seeded(spec.train, seeds.stream("g1")))};
  } else {
    const Predictor lin = fit_linear_predictor(ctx.ref.x, ctx.ref.y);
    ctx.g1 = LinearBase{lin.linear().weights, lin.linear().intercept};
  }
  FitOptions opt;
  opt.id = "f_theta";
  ctx.theta_linear = fit_linear_predictor(ctx.ref.x, ctx.ref.y, opt);
  FitOptions phi_opt;
  phi_opt.id = "f_phi";
  ctx.phi = make_test_predictor(ctx.ref.x, ctx.ref.y, ShuffleSpec{seeds.stream("shuffle"), 1.0, std::nullopt}, phi_opt);
  return ctx;
}

Predictor build_theta(const ExperimentSpec& s, const ReplicateContext& ctx, const SeedPlan& seeds) {
  const std::string& t = s.template_name;
  if (t == "fig3a-noniden") return ctx.theta_linear;
  if (t == "fig3b-random" || t == "fig5a-trainsize-sweep" || t == "fig5c-shift-sweep" || t == "fig4b-noise-sweep")
    return wrap_noise(ctx.theta_linear, NoiseSpec::gaussian(s.noise_scale, NoiseTarget::prediction));
  if (t == "fig3c-overparam" || t == "fig5b-trainsize-sweep") {
    FitOptions opt;
    opt.id = "f_theta";
    return fit_overparam_predictor(ctx.ref.x, ctx.ref.y, s.degree, opt);
  }
  if (t == "fig3d-discrete")
    return wrap_discretize(ctx.theta_linear, quantile_levels(ctx.theta_linear.deterministic(ctx.ref.x), s.levels));
  if (t == "fig4a-width-sweep") {
    Predictor p = fit_neural_predictor(ctx.ref.x, ctx.ref.y, s.m_theta,
                                       seeded(s.train, seeds.stream("f_theta", static_cast<std::uint64_t>(s.m_theta))));
    p.set_id("f_theta");
    return p;
  }
  throw SpecError("/template", "not a regression template: '" + t + "'");
}

Metrics regression_cell(const ExperimentSpec& s, ReplicateContext& ctx, const CovariateSource& source,
                        const SeedPlan& seeds) {
  const Predictor theta = build_theta(s, ctx, seeds);
  const Predictor phi = s.template_name == "fig5c-shift-sweep" ? interpolate(ctx.theta_linear, ctx.phi, s.rho) : ctx.phi;
  OutcomeMechanism mech;
  mech.id = "g1+alpha*yhat";
  mech.base = ctx.g1;
  mech.performativity = LinearPerformativity{s.alpha};
  mech.noise = NoiseSpec::gaussian(s.outcome_noise);
  mech.validate();

  const Dataset train = generate_dataset(source, theta, mech, s.n_train, seeds, "train");
  const Dataset test = generate_dataset(source, phi, mech, s.n_test, seeds, "test");

  const HypothesisClass cls = meta_class_for(s);
  const FittedModel with = fit_meta_model(train, with_prediction(cls, true, seeds.stream("meta/with")));
  const FittedModel without = fit_meta_model(train, with_prediction(cls, false, seeds.stream("meta/without")));
  const std::string key = format_double(s.alpha) + "|" + format_double(s.rho) + "|" + std::to_string(s.n_train);
  auto cached = ctx.baseline.find(key);
  if (cached == ctx.baseline.end()) {
    const Dataset base_train = generate_dataset(source, phi, mech, s.n_train, seeds, "baseline");
    const FittedModel base = fit_meta_model(base_train, with_prediction(cls, true, seeds.stream("meta/baseline")));
    cached = ctx.baseline.emplace(key, evaluate(base, test, Metric::rmse)).first;
  }

  const double r_with = evaluate(with, test, Metric::rmse);
  const double r_without = evaluate(without, test, Metric::rmse);
  const double r_base = cached->second;
  const Estimate dsq = prediction_distance_sq(theta, phi, source, s.n_test, seeds.stream("d_sq"));

  Metrics m = {{"with-yhat", r_with}, {"without-yhat", r_without}, {"baseline", r_base}};
  m.emplace_back("d_sq", dsq.value);
  m.emplace_back("prop1", s.alpha * s.alpha * dsq.value);
  m.emplace_back("excess-without", r_without * r_without - r_base * r_base);
  m.emplace_back("excess-with", r_with * r_with - r_base * r_base);
  m.emplace_back("yhat-coef", yhat_coefficient_of(with));
  m.emplace_back("rank-deficient", with.diagnostics.rank_deficient ? 1.0 : 0.0);
  m.emplace_back("train-risk-with", with.diagnostics.final_risk);
  if (const auto* lb = std::get_if<LinearBase>(&ctx.g1); lb && cls.kind == ModelKind::linear) {
    m.emplace_back("x-coef-max-error", (with.x_coefficients() - lb->beta).cwiseAbs().maxCoeff());
  }
  return m;
}

// ------------------------------------------------------------ misspecification

struct MisspecContext {
  Matrix pool;
  Vector labels;
  CovariateSource table_source;
};

MisspecContext prepare_misspec(const ExperimentSpec& spec, const CovariateSource& source, const SeedPlan& seeds) {
  MisspecContext ctx;
  Rng rx(seeds.stream("reference/x"));
  const CovariateSample s = source.sample(spec.reference.n, rx);
  ctx.pool = s.x;
  ctx.labels.resize(ctx.pool.rows());
  if (source.kind() == CovariateSource::Kind::table && source.table().labels) {
    for (Index i = 0; i < ctx.pool.rows(); ++i) {
      const double v = (*source.table().labels)[s.rows[static_cast<std::size_t>(i)]];
      if (v != 0.0 && v != 1.0) throw SpecError("/covariates/label_column", "misspecification study needs 0/1 labels");
      ctx.labels[i] = v;
    }
  } else {
    const Vector signal = reference_signal(spec.reference, ctx.pool).array() - spec.reference.intercept;
    Rng ry(seeds.stream("reference/y"));
    for (Index i = 0; i < ctx.pool.rows(); ++i) {
      const double prob = 1.0 / (1.0 + std::exp(-spec.reference.steepness * signal[i]));
      ctx.labels[i] = ry.bernoulli(prob) ? 1.0 : 0.0;
    }
  }
  CovariateTable table;
  for (Index j = 0; j < ctx.pool.cols(); ++j) table.columns.push_back("x" + std::to_string(j));
  table.values = ctx.pool;
  ctx.table_source = CovariateSource::from_table(std::move(table));
  return ctx;
}

Metrics misspec_cell(const ExperimentSpec& s, const MisspecContext& ctx, const SeedPlan& seeds) {
  const Vector noisy = shuffle_labels(ctx.labels, ShuffleSpec{seeds.stream("flip"), 0.0, s.gamma});
  const std::vector<double> binary = {0.0, 1.0};
  FitOptions ot;
  ot.id = "f_theta";
  FitOptions op;
  op.id = "f_phi";
  const Predictor theta = wrap_discretize(fit_linear_predictor(ctx.pool, s.reversed ? noisy : ctx.labels, ot), binary);
  const Predictor phi = wrap_discretize(fit_linear_predictor(ctx.pool, s.reversed ? ctx.labels : noisy, op), binary);

  OutcomeMechanism mech;
  mech.id = "replace";
  mech.base = LabelLookup{ctx.pool, ctx.labels};
  mech.performativity = ReplacePerformativity{s.p};
  mech.noise = NoiseSpec::none();
  mech.validate();

  const Dataset train = generate_dataset(ctx.table_source, theta, mech, s.n_train, seeds, "train");
  const Dataset test = generate_dataset(ctx.table_source, phi, mech, s.n_test, seeds, "test");
  const Dataset base_train = generate_dataset(ctx.table_source, phi, mech, s.n_train, seeds, "baseline");

  const HypothesisClass cls = meta_class_for(s);
  const FittedModel with = fit_meta_model(train, with_prediction(cls, true, seeds.stream("meta/with")));
  const FittedModel without = fit_meta_model(train, with_prediction(cls, false, seeds.stream("meta/without")));
  const FittedModel base = fit_meta_model(base_train, with_prediction(cls, true, seeds.stream("meta/baseline")));

  Index agree = 0;
  for (Index i = 0; i < test.rows(); ++i) agree += theta.deterministic(test.x.row(i))[0] == test.yhat[i] ? 1 : 0;

  Metrics m = {{"with-yhat", evaluate(with, test, Metric::accuracy)},
               {"without-yhat", evaluate(without, test, Metric::accuracy)},
               {"baseline", evaluate(base, test, Metric::accuracy)}};
  m.emplace_back("predictor-agreement", static_cast<double>(agree) / static_cast<double>(test.rows()));
  return m;
}

// ------------------------------------------------------------------ harness

struct CellOutcome {
  Metrics metrics;
  std::string error;
};

ExperimentResult run_cells(const ExperimentSpec& spec, const RunOptions& options, bool misspec) {
  spec.validate();
  if (options.jobs < 1) throw Error("jobs must be at least 1");
  const CovariateSource base_source = make_source(spec.covariates);
  const SeedPlan plan(spec.seed);
  const auto reps = static_cast<std::size_t>(spec.replicates);
  const std::size_t sweeps = spec.sweep_values.size();
  std::vector<std::vector<CellOutcome>> outcomes(reps, std::vector<CellOutcome>(sweeps));

  const auto run_replicate = [&](std::size_t r) {
    const SeedPlan seeds = plan.child(spec.template_name, r);
    try {
      if (misspec) {
        const MisspecContext ctx = prepare_misspec(spec, base_source, seeds);
        for (std::size_t k = 0; k < sweeps; ++k) {
          ExperimentSpec s = spec;
          set_parameter(s, spec.sweep_parameter, spec.sweep_values[k]);
          try {
            outcomes[r][k].metrics = misspec_cell(s, ctx, seeds);
          } catch (const std::exception& e) {
            outcomes[r][k].error = e.what();
          }
        }
      } else {
        ReplicateContext ctx = prepare_regression(spec, base_source, seeds);
        for (std::size_t k = 0; k < sweeps; ++k) {
          ExperimentSpec s = spec;
          set_parameter(s, spec.sweep_parameter, spec.sweep_values[k]);
          try {
            outcomes[r][k].metrics = regression_cell(s, ctx, base_source, seeds);
          } catch (const std::exception& e) {
            outcomes[r][k].error = e.what();
          }
        }
      }
    } catch (const std::exception& e) {
      for (auto& o : outcomes[r]) o.error = std::string("replicate setup: ") + e.what();
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(options.jobs), reps);
  if (workers <= 1) {
    for (std::size_t r = 0; r < reps; ++r) run_replicate(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < reps; r = next++) run_replicate(r);
      });
    for (auto& t : pool) t.join();
  }

  ExperimentResult result;
  result.spec = spec;
  result.metric = misspec ? "accuracy" : "rmse";
  for (std::size_t k = 0; k < sweeps; ++k) {
    const double v = spec.sweep_values[k];
    std::vector<std::string> names = kConditions;
    std::set<std::string> seen(names.begin(), names.end());
    for (std::size_t r = 0; r < reps; ++r)
      for (const auto& [name, value] : outcomes[r][k].metrics)
        if (seen.insert(name).second) names.push_back(name);
    for (std::size_t c = 0; c < names.size(); ++c) {
      ResultRow row;
      row.sweep = v;
      row.condition = names[c];
      for (std::size_t r = 0; r < reps; ++r)
        for (const auto& [name, value] : outcomes[r][k].metrics)
          if (name == names[c]) row.values.push_back(value);
      if (!row.values.empty()) {
        double sum = 0.0;
        for (double x : row.values) sum += x;
        row.mean = sum / static_cast<double>(row.values.size());
        row.std_error = standard_error(row.values);
        row.min = *std::min_element(row.values.begin(), row.values.end());
        row.max = *std::max_element(row.values.begin(), row.values.end());
      } else {
        row.mean = row.std_error = row.min = row.max = std::numeric_limits<double>::quiet_NaN();
      }
      (c < kConditions.size() ? result.rows : result.diagnostics).push_back(std::move(row));
    }
    for (std::size_t r = 0; r < reps; ++r)
      if (!outcomes[r][k].error.empty()) result.failures.push_back({v, static_cast<int>(r), outcomes[r][k].error});
  }
  if (options.on_cell) {
    for (std::size_t k = 0; k < sweeps; ++k)
      for (std::size_t r = 0; r < reps; ++r) {
        CellReport rep{spec.sweep_values[k], static_cast<int>(r), outcomes[r][k].metrics, outcomes[r][k].error};
        options.on_cell(rep);
      }
  }
  return result;
}

// ---------------------------------------------------------------- spec JSON

template <typename T>
T field(const json& doc, const std::string& key, const T& fallback, const std::string& prefix = "") {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SpecError(prefix + "/" + key, std::string("wrong type (") + e.what() + ")");
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& prefix) {
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!known.count(it.key())) throw SpecError(prefix + "/" + it.key(), "unknown field");
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

double null_or_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json row_json(const ResultRow& r) {
  json values = json::array();
  for (double v : r.values) values.push_back(number_or_null(v));
  return {{"sweep", r.sweep},
          {"condition", r.condition},
          {"mean", number_or_null(r.mean)},
          {"stderr", number_or_null(r.std_error)},
          {"min", number_or_null(r.min)},
          {"max", number_or_null(r.max)},
          {"replicates", r.values.size()},
          {"values", values}};
}

ResultRow row_from_json(const json& j) {
  ResultRow r;
  r.sweep = j.at("sweep").get<double>();
  r.condition = j.at("condition").get<std::string>();
  r.mean = null_or_number(j.at("mean"));
  r.std_error = null_or_number(j.at("stderr"));
  r.min = null_or_number(j.value("min", json()));
  r.max = null_or_number(j.value("max", json()));
  for (const auto& v : j.at("values")) r.values.push_back(null_or_number(v));
  return r;
}

}  // namespace

const std::vector<std::string>& experiment_templates() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : templates()) n.push_back(k);
    return n;
  }();
  return names;
}

ExperimentSpec default_spec(const std::string& template_name) {
  const TemplateInfo& info = template_info(template_name);
  ExperimentSpec s;
  s.template_name = template_name;
  s.sweep_parameter = info.sweep_parameters.front();
  s.sweep_values = info.default_values;
  if (template_name.rfind("fig5", 0) == 0) s.n_train = 5000;
  if (template_name == "fig4a-width-sweep") {
    s.n_train = 5000;
    s.n_test = 10000;
    s.reference.n = 10000;
    s.reference.beta = {1.0, -0.75, 0.5, -0.25, 0.25};
    s.reference.quad = 1.0;
    s.reference.ridge = 24.0;
    s.train.epochs = 250;
    s.train.step = 0.003;
    s.train.batch = 128;
    s.train.patience = 250;
  }
  if (template_name == "appD-misspec") {
    s.n_train = 20000;
    s.n_test = 20000;
    s.reference.n = 20000;
    s.reference.steepness = 1.0;
  }
  return s;
}

void ExperimentSpec::validate() const {
  const TemplateInfo& info = template_info(template_name);
  if (std::find(info.sweep_parameters.begin(), info.sweep_parameters.end(), sweep_parameter) ==
      info.sweep_parameters.end())
    throw SpecError("/sweep/parameter", "'" + sweep_parameter + "' is not sweepable in " + template_name);
  if (sweep_values.empty()) throw SpecError("/sweep/values", "needs at least one value");
  for (std::size_t k = 0; k < sweep_values.size(); ++k) {
    const double v = sweep_values[k];
    const std::string ptr = "/sweep/values/" + std::to_string(k);
    if (!std::isfinite(v)) throw SpecError(ptr, "must be finite");
    if (is_integer_parameter(sweep_parameter) && (v < 1 || v != std::floor(v)))
      throw SpecError(ptr, "must be a positive integer");
    if ((sweep_parameter == "rho" || sweep_parameter == "p") && !(v >= 0.0 && v <= 1.0))
      throw SpecError(ptr, "must lie in [0, 1]");
    if (sweep_parameter == "gamma" && !(v >= 0.0 && v <= 0.5)) throw SpecError(ptr, "must lie in [0, 0.5]");
    if ((sweep_parameter == "alpha" || sweep_parameter == "noise_scale") && v < 0.0)
      throw SpecError(ptr, "must be >= 0");
  }
  if (replicates < 1) throw SpecError("/replicates", "must be >= 1");
  if (n_train < 2) throw SpecError("/n_train", "must be >= 2");
  if (n_test < 2) throw SpecError("/n_test", "must be >= 2");
  if (!(alpha >= 0.0)) throw SpecError("/alpha", "must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw SpecError("/p", "must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 0.5)) throw SpecError("/gamma", "must lie in [0, 0.5]");
  if (!(noise_scale >= 0.0)) throw SpecError("/noise_scale", "must be >= 0");
  if (!(outcome_noise >= 0.0)) throw SpecError("/outcome_noise", "must be >= 0");
  if (levels < 2) throw SpecError("/levels", "must be >= 2");
  if (degree < 2) throw SpecError("/degree", "must be >= 2");
  if (m_theta < 1) throw SpecError("/m_theta", "must be >= 1");
  if (m_g < 1) throw SpecError("/m_g", "must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw SpecError("/rho", "must lie in [0, 1]");
  if (reference.n < 10) throw SpecError("/reference/n", "must be >= 10");
  if (covariates.kind != "synthetic-gaussian" && covariates.kind != "csv")
    throw SpecError("/covariates/kind", "must be 'synthetic-gaussian' or 'csv'");
  if (covariates.kind == "csv" && covariates.path.empty()) throw SpecError("/covariates/path", "required for csv");
  if (covariates.kind == "synthetic-gaussian" && covariates.dim < 1) throw SpecError("/covariates/dim", "must be >= 1");
  if (train.epochs < 1 || train.batch < 1 || !(train.step > 0.0)) throw SpecError("/train", "needs epochs, batch >= 1 and step > 0");
}

ExperimentSpec parse_experiment_spec(const json& doc) {
  if (!doc.is_object()) throw SpecError("", "spec must be a JSON object");
  if (!doc.contains("template")) throw SpecError("/template", "missing");
  const std::string name = field<std::string>(doc, "template", "");
  ExperimentSpec s = default_spec(name);
  reject_unknown(doc,
                 {"template", "description", "sweep", "n_train", "n_test", "replicates", "alpha", "p", "gamma",
                  "reversed", "noise_scale", "outcome_noise", "levels", "degree", "m_theta", "m_g", "rho",
                  "meta_class", "train", "reference", "covariates", "seed"},
                 "");
  s.description = field(doc, "description", s.description);
  if (doc.contains("sweep")) {
    const json& sw = doc.at("sweep");
    if (!sw.is_object()) throw SpecError("/sweep", "must be an object");
    reject_unknown(sw, {"parameter", "values"}, "/sweep");
    const std::string param = field(sw, "parameter", s.sweep_parameter, "/sweep");
    if (param != s.sweep_parameter && !sw.contains("values") && param == "gamma")
      s.sweep_values = {0.05, 0.15, 0.25, 0.35, 0.45, 0.5};
    s.sweep_parameter = param;
    s.sweep_values = field(sw, "values", s.sweep_values, "/sweep");
  }
  s.n_train = field(doc, "n_train", s.n_train);
  s.n_test = field(doc, "n_test", s.n_test);
  s.replicates = field(doc, "replicates", s.replicates);
  s.alpha = field(doc, "alpha", s.alpha);
  s.p = field(doc, "p", s.p);
  s.gamma = field(doc, "gamma", s.gamma);
  s.reversed = field(doc, "reversed", s.reversed);
  s.noise_scale = field(doc, "noise_scale", s.noise_scale);
  s.outcome_noise = field(doc, "outcome_noise", s.outcome_noise);
  s.levels = field(doc, "levels", s.levels);
  s.degree = field(doc, "degree", s.degree);
  s.m_theta = field(doc, "m_theta", s.m_theta);
  s.m_g = field(doc, "m_g", s.m_g);
  s.rho = field(doc, "rho", s.rho);
  s.seed = field(doc, "seed", s.seed);
  if (doc.contains("meta_class")) {
    try {
      s.meta_class = doc.at("meta_class").get<HypothesisClass>();
    } catch (const std::exception& e) {
      throw SpecError("/meta_class", e.what());
    }
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    if (!t.is_object()) throw SpecError("/train", "must be an object");
    reject_unknown(t, {"optimizer", "epochs", "step", "batch", "init_seed", "tolerance", "patience"}, "/train");
    if (t.contains("optimizer")) {
      const std::string o = field<std::string>(t, "optimizer", "", "/train");
      if (o == "adam") s.train.optimizer = Optimizer::adam;
      else if (o == "levenberg-marquardt") s.train.optimizer = Optimizer::levenberg_marquardt;
      else throw SpecError("/train/optimizer", "must be 'adam' or 'levenberg-marquardt'");
    }
    s.train.epochs = field(t, "epochs", s.train.epochs, "/train");
    s.train.step = field(t, "step", s.train.step, "/train");
    s.train.batch = field(t, "batch", s.train.batch, "/train");
    s.train.init_seed = field(t, "init_seed", s.train.init_seed, "/train");
    s.train.tolerance = field(t, "tolerance", s.train.tolerance, "/train");
    s.train.patience = field(t, "patience", s.train.patience, "/train");
  }
  if (doc.contains("reference")) {
    const json& r = doc.at("reference");
    if (!r.is_object()) throw SpecError("/reference", "must be an object");
    reject_unknown(r, {"n", "intercept", "beta", "quad", "ridge", "slope", "noise", "steepness"}, "/reference");
    s.reference.n = field(r, "n", s.reference.n, "/reference");
    s.reference.intercept = field(r, "intercept", s.reference.intercept, "/reference");
    s.reference.beta = field(r, "beta", s.reference.beta, "/reference");
    s.reference.quad = field(r, "quad", s.reference.quad, "/reference");
    s.reference.ridge = field(r, "ridge", s.reference.ridge, "/reference");
    s.reference.slope = field(r, "slope", s.reference.slope, "/reference");
    s.reference.noise = field(r, "noise", s.reference.noise, "/reference");
    s.reference.steepness = field(r, "steepness", s.reference.steepness, "/reference");
  }
  if (doc.contains("covariates")) {
    const json& c = doc.at("covariates");
    if (!c.is_object()) throw SpecError("/covariates", "must be an object");
    reject_unknown(c, {"kind", "dim", "path", "label_column"}, "/covariates");
    s.covariates.kind = field(c, "kind", s.covariates.kind, "/covariates");
    s.covariates.dim = field(c, "dim", s.covariates.dim, "/covariates");
    s.covariates.path = field(c, "path", s.covariates.path, "/covariates");
    s.covariates.label_column = field(c, "label_column", s.covariates.label_column, "/covariates");
  }
  s.validate();
  return s;
}

json to_json(const ExperimentSpec& s) {
  json j = {{"template", s.template_name},
            {"description", s.description},
            {"sweep", {{"parameter", s.sweep_parameter}, {"values", s.sweep_values}}},
            {"n_train", s.n_train},
            {"n_test", s.n_test},
            {"replicates", s.replicates},
            {"alpha", s.alpha},
            {"p", s.p},
            {"gamma", s.gamma},
            {"reversed", s.reversed},
            {"noise_scale", s.noise_scale},
            {"outcome_noise", s.outcome_noise},
            {"levels", s.levels},
            {"degree", s.degree},
            {"m_theta", s.m_theta},
            {"m_g", s.m_g},
            {"rho", s.rho},
            {"train", s.train},
            {"reference",
             {{"n", s.reference.n},
              {"intercept", s.reference.intercept},
              {"beta", s.reference.beta},
              {"quad", s.reference.quad},
              {"ridge", s.reference.ridge},
              {"slope", s.reference.slope},
              {"noise", s.reference.noise},
              {"steepness", s.reference.steepness}}},
            {"covariates",
             {{"kind", s.covariates.kind},
              {"dim", s.covariates.dim},
              {"path", s.covariates.path},
              {"label_column", s.covariates.label_column}}},
            {"seed", s.seed}};
  if (s.meta_class) j["meta_class"] = *s.meta_class;
  return j;
}

CovariateSource make_source(const CovariateConfig& config) {
  if (config.kind == "csv") {
    std::optional<std::string> label;
    if (!config.label_column.empty()) label = config.label_column;
    return CovariateSource::from_table(load_covariates(config.path, label));
  }
  return CovariateSource::standard_normal(config.dim);
}

double standard_error(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

const ResultRow& ExperimentResult::row(double sweep, const std::string& condition) const {
  for (const auto& r : rows)
    if (r.sweep == sweep && r.condition == condition) return r;
  throw DomainError("no result row for sweep " + format_double(sweep) + ", condition " + condition);
}

const ResultRow& ExperimentResult::diagnostic(double sweep, const std::string& name) const {
  for (const auto& r : diagnostics)
    if (r.sweep == sweep && r.condition == name) return r;
  throw DomainError("no diagnostic '" + name + "' for sweep " + format_double(sweep));
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  if (spec.template_name == "appD-misspec") return run_misspec_experiment(spec, options);
  return run_cells(spec, options, false);
}

ExperimentResult run_misspec_experiment(const ExperimentSpec& spec, const RunOptions& options) {
  if (spec.template_name != "appD-misspec") throw SpecError("/template", "misspecification study needs appD-misspec");
  return run_cells(spec, options, true);
}

std::string result_csv(const ExperimentResult& result) {
  std::string out = "sweep,condition,mean,stderr,replicates\n";
  for (const auto& r : result.rows)
    out += format_double(r.sweep) + "," + r.condition + "," + format_double(r.mean) + "," + format_double(r.std_error) +
           "," + std::to_string(r.values.size()) + "\n";
  return out;
}

json result_json(const ExperimentResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) rows.push_back(row_json(r));
  json diags = json::array();
  for (const auto& r : result.diagnostics) diags.push_back(row_json(r));
  json failures = json::array();
  for (const auto& f : result.failures)
    failures.push_back({{"sweep", f.sweep}, {"replicate", f.replicate}, {"error", f.message}});
  return {{"template", result.spec.template_name},
          {"metric", result.metric},
          {"master_seed", result.spec.seed},
          {"spec", to_json(result.spec)},
          {"rows", rows},
          {"diagnostics", diags},
          {"failures", failures}};
}

ExperimentResult result_from_json(const json& doc) {
  ExperimentResult r;
  r.spec = parse_experiment_spec(doc.at("spec"));
  r.metric = doc.at("metric").get<std::string>();
  for (const auto& row : doc.at("rows")) r.rows.push_back(row_from_json(row));
  for (const auto& row : doc.value("diagnostics", json::array())) r.diagnostics.push_back(row_from_json(row));
  for (const auto& f : doc.value("failures", json::array()))
    r.failures.push_back({f.at("sweep").get<double>(), f.at("replicate").get<int>(), f.at("error").get<std::string>()});
  return r;
}

void export_result(const ExperimentResult& result, ExportFormat format, const std::string& path) {
  if (format == ExportFormat::csv)
    write_text_file(path, result_csv(result));
  else
    write_text_file(path, result_json(result).dump(2) + "\n");
}

}  // namespace perflab
