#include "perflab/scm.hpp"

#include "perflab/csv.hpp"

#include <cmath>
#include <filesystem>
#include <map>

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

Vector lookup_labels(const LabelLookup& lk, const Matrix& x, const std::vector<Index>& rows) {
  Vector out(x.rows());
  if (!rows.empty()) {
    if (static_cast<Index>(rows.size()) != x.rows()) throw DimensionError("row index list and covariates differ");
    for (Index i = 0; i < x.rows(); ++i) {
      const Index r = rows[static_cast<std::size_t>(i)];
      if (r < 0 || r >= lk.labels.size()) throw DomainError("source row out of range in label lookup");
      out[i] = lk.labels[r];
    }
    return out;
  }
  std::map<std::vector<double>, Index> index;
  for (Index r = 0; r < lk.table.rows(); ++r) index.emplace(to_std(lk.table.row(r).transpose()), r);
  for (Index i = 0; i < x.rows(); ++i) {
    const auto it = index.find(to_std(x.row(i).transpose()));
    if (it == index.end())
      throw NonFiniteError("covariate vector not present in label table", static_cast<std::size_t>(i));
    out[i] = lk.labels[it->second];
  }
  return out;
}

nlohmann::json describe_mechanism(const OutcomeMechanism& m) {
  nlohmann::json j = m;
  if (std::holds_alternative<LabelLookup>(m.base)) {
    const auto& lk = std::get<LabelLookup>(m.base);
    j["base"] = {{"kind", "label-lookup"}, {"rows", lk.table.rows()}, {"dim", lk.table.cols()}};
  }
  return j;
}

}  // namespace

OutcomeMechanism OutcomeMechanism::linear(Vector beta, double intercept, double alpha, NoiseSpec noise) {
  OutcomeMechanism m;
  m.id = "linear";
  m.base = LinearBase{std::move(beta), intercept};
  m.performativity = LinearPerformativity{alpha};
  m.noise = noise;
  m.noise.applies_to = NoiseTarget::outcome;
  m.validate();
  return m;
}

Index OutcomeMechanism::input_dim() const {
  return std::visit(overloaded{[](const LinearBase& b) { return b.beta.size(); },
                               [](const NeuralBase& b) { return b.net.input_dim(); },
                               [](const LabelLookup& b) { return b.table.cols(); }},
                    base);
}

void OutcomeMechanism::validate() const {
  std::visit(overloaded{[](const LinearPerformativity& p) {
                          if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha))
                            throw DomainError("performativity strength alpha must be finite and >= 0");
                        },
                        [](const ReplacePerformativity& p) {
                          if (!(p.p >= 0.0 && p.p <= 1.0)) throw DomainError("replace probability must lie in [0, 1]");
                        }},
             performativity);
  if (const auto* lk = std::get_if<LabelLookup>(&base); lk && lk->table.rows() != lk->labels.size())
    throw DimensionError("label table and labels differ in length");
}

Vector OutcomeMechanism::base_value(const Matrix& x, const std::vector<Index>& rows) const {
  if (x.cols() != input_dim())
    throw DimensionError("mechanism expects " + std::to_string(input_dim()) + " covariates, got " +
                         std::to_string(x.cols()));
  return std::visit(overloaded{[&](const LinearBase& b) -> Vector {
                                 Vector out = x * b.beta;
                                 out.array() += b.intercept;
                                 return out;
                               },
                               [&](const NeuralBase& b) -> Vector { return b.net.predict(x); },
                               [&](const LabelLookup& b) -> Vector { return lookup_labels(b, x, rows); }},
                    base);
}

Vector OutcomeMechanism::expected(const Matrix& x, const Vector& yhat, const std::vector<Index>& rows) const {
  if (yhat.size() != x.rows()) throw DimensionError("predictions and covariates differ in length");
  const Vector g1 = base_value(x, rows);
  return std::visit(overloaded{[&](const LinearPerformativity& p) -> Vector { return g1 + p.alpha * yhat; },
                               [&](const ReplacePerformativity& p) -> Vector {
                                 return p.p * yhat + (1.0 - p.p) * g1;
                               }},
                    performativity);
}

Vector OutcomeMechanism::sample(const Matrix& x, const Vector& yhat, Rng& rng,
                                const std::vector<Index>& rows) const {
  if (yhat.size() != x.rows()) throw DimensionError("predictions and covariates differ in length");
  Vector out = base_value(x, rows);
  if (const auto* lin = std::get_if<LinearPerformativity>(&performativity)) {
    out += lin->alpha * yhat;
    if (!noise.is_degenerate())
      for (Index i = 0; i < out.size(); ++i) out[i] += noise.sample(rng);
  } else {
    const double p = std::get<ReplacePerformativity>(performativity).p;
    for (Index i = 0; i < out.size(); ++i) {
      if (rng.bernoulli(p)) out[i] = yhat[i];
      if (!noise.is_degenerate()) out[i] += noise.sample(rng);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const OutcomeMechanism& m) {
  j = nlohmann::json::object();
  j["id"] = m.id;
  std::visit(overloaded{[&](const LinearBase& b) {
                          j["base"] = {{"kind", "linear"}, {"beta", to_std(b.beta)}, {"intercept", b.intercept}};
                        },
                        [&](const NeuralBase& b) { j["base"] = {{"kind", "neural"}, {"network", b.net}}; },
                        [&](const LabelLookup& b) {
                          std::vector<std::vector<double>> table;
                          for (Index r = 0; r < b.table.rows(); ++r) table.push_back(to_std(b.table.row(r).transpose()));
                          j["base"] = {{"kind", "label-lookup"}, {"table", table}, {"labels", to_std(b.labels)}};
                        }},
             m.base);
  std::visit(overloaded{[&](const LinearPerformativity& p) {
                          j["performativity"] = {{"kind", "linear"}, {"alpha", p.alpha}};
                        },
                        [&](const ReplacePerformativity& p) {
                          j["performativity"] = {{"kind", "replace"}, {"p", p.p}};
                        }},
             m.performativity);
  j["noise"] = m.noise;
}

void from_json(const nlohmann::json& j, OutcomeMechanism& m) {
  m.id = j.value("id", std::string("mechanism"));
  const auto& b = j.at("base");
  const std::string kind = b.at("kind").get<std::string>();
  if (kind == "linear") {
    m.base = LinearBase{from_std(b.at("beta").get<std::vector<double>>()), b.value("intercept", 0.0)};
  } else if (kind == "neural") {
    m.base = NeuralBase{b.at("network").get<NeuralNet>()};
  } else if (kind == "label-lookup") {
    const auto table = b.at("table").get<std::vector<std::vector<double>>>();
    LabelLookup lk;
    lk.labels = from_std(b.at("labels").get<std::vector<double>>());
    lk.table.resize(static_cast<Index>(table.size()), table.empty() ? 0 : static_cast<Index>(table[0].size()));
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (static_cast<Index>(table[r].size()) != lk.table.cols()) throw DimensionError("ragged label table");
      for (std::size_t c = 0; c < table[r].size(); ++c)
        lk.table(static_cast<Index>(r), static_cast<Index>(c)) = table[r][c];
    }
    m.base = std::move(lk);
  } else {
    throw DomainError("unknown base function kind '" + kind + "'");
  }
  const auto& p = j.at("performativity");
  const std::string pkind = p.at("kind").get<std::string>();
  if (pkind == "linear")
    m.performativity = LinearPerformativity{p.at("alpha").get<double>()};
  else if (pkind == "replace")
    m.performativity = ReplacePerformativity{p.at("p").get<double>()};
  else
    throw DomainError("unknown performativity kind '" + pkind + "'");
  m.noise = j.contains("noise") ? j.at("noise").get<NoiseSpec>() : NoiseSpec::none();
  m.validate();
}

void to_json(nlohmann::json& j, const Provenance& p) {
  j = {{"predictor_id", p.predictor_id}, {"mechanism", p.mechanism}, {"source", p.source},
       {"master_seed", p.master_seed},   {"n", p.n},                 {"stream_label", p.stream_label}};
}

void from_json(const nlohmann::json& j, Provenance& p) {
  p.predictor_id = j.value("predictor_id", std::string());
  p.mechanism = j.value("mechanism", nlohmann::json());
  p.source = j.value("source", nlohmann::json());
  p.master_seed = j.value("master_seed", std::uint64_t{0});
  p.n = j.value("n", Index{0});
  p.stream_label = j.value("stream_label", std::string());
}

void Dataset::validate() const {
  const Index n = x.rows();
  if (yhat.size() != n || y.size() != n || (exposure && exposure->size() != n))
    throw DimensionError("dataset columns differ in length");
  for (Index i = 0; i < n; ++i) {
    if (!x.row(i).allFinite() || !std::isfinite(yhat[i]) || !std::isfinite(y[i]) ||
        (exposure && !std::isfinite((*exposure)[i])))
      throw NonFiniteError("non-finite value in dataset", static_cast<std::size_t>(i));
  }
}

Vector draw_outcomes(const OutcomeMechanism& mechanism, const Matrix& x, const Vector& yhat,
                     const std::vector<Index>& rows, const SeedPlan& seeds, const std::string& label) {
  Rng rng(seeds.stream(label + "/y"));
  return mechanism.sample(x, yhat, rng, rows);
}

Dataset generate_dataset(const CovariateSource& source, const Predictor& predictor,
                         const OutcomeMechanism& mechanism, Index n, const SeedPlan& seeds,
                         const std::string& label) {
  if (n < 1) throw DomainError("dataset size must be at least 1");
  if (predictor.input_dim() != source.dim())
    throw DimensionError("predictor takes " + std::to_string(predictor.input_dim()) +
                         " covariates but the source has " + std::to_string(source.dim()));
  if (mechanism.input_dim() != source.dim())
    throw DimensionError("mechanism takes " + std::to_string(mechanism.input_dim()) +
                         " covariates but the source has " + std::to_string(source.dim()));
  Dataset data;
  Rng rx(seeds.stream(label + "/x"));
  CovariateSample s = source.sample(n, rx);
  data.x = std::move(s.x);
  data.source_rows = std::move(s.rows);

  Rng rp(seeds.stream(label + "/yhat"));
  data.yhat = predictor.predict(data.x, rp);
  for (Index i = 0; i < n; ++i)
    if (!std::isfinite(data.yhat[i]))
      throw NonFiniteError("predictor produced a non-finite value", static_cast<std::size_t>(i));

  data.y = draw_outcomes(mechanism, data.x, data.yhat, data.source_rows, seeds, label);
  for (Index i = 0; i < n; ++i)
    if (!std::isfinite(data.y[i]))
      throw NonFiniteError("outcome mechanism produced a non-finite value", static_cast<std::size_t>(i));

  data.provenance.predictor_id = predictor.id();
  data.provenance.mechanism = describe_mechanism(mechanism);
  data.provenance.source = source.describe();
  data.provenance.master_seed = seeds.master();
  data.provenance.n = n;
  data.provenance.stream_label = label;
  return data;
}

double ground_truth_m_y(const OutcomeMechanism& mechanism, const Vector& x, double yhat) {
  if (!x.allFinite() || !std::isfinite(yhat)) throw DomainError("ground_truth_m_y needs finite inputs");
  Vector y(1);
  y[0] = yhat;
  return mechanism.expected(x.transpose(), y)[0];
}

Estimate prediction_distance_sq(const Predictor& f_a, const Predictor& f_b, const CovariateSource& source,
                                Index n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw DomainError("prediction distance needs n_mc >= 2");
  Rng rng(seed);
  const Matrix x = source.sample(n_mc, rng).x;
  const Vector diff = f_a.deterministic(x) - f_b.deterministic(x);
  return jackknife_mean(diff.array().square().matrix());
}

Bounds prop1_bounds(double alpha, double d_sq, double mu, double gamma) {
  if (!(alpha >= 0.0) || !(d_sq >= 0.0)) throw DomainError("alpha and d_sq must be >= 0");
  if (!(mu > 0.0) || !(gamma >= mu)) throw DomainError("need gamma >= mu > 0");
  const double core = alpha * alpha * d_sq;
  return {0.5 * mu * core, 0.5 * gamma * core};
}

Estimate counterfactual_metric(const OutcomeModel& outcome, const Kappa& kappa, const CovariateSource& source,
                               const Predictor& predictor, Index n_mc, std::uint64_t seed) {
  if (n_mc < 2) throw DomainError("counterfactual metric needs n_mc >= 2");
  const SeedPlan plan(seed);
  Rng rx(plan.stream("x"));
  const CovariateSample s = source.sample(n_mc, rx);
  Rng rp(plan.stream("yhat"));
  const Vector yhat = predictor.predict(s.x, rp);
  Rng ry(plan.stream("y"));
  const Vector y = outcome(s.x, yhat, s.rows, ry);
  Vector values(n_mc);
  for (Index i = 0; i < n_mc; ++i) {
    values[i] = kappa(s.x.row(i).transpose(), y[i], yhat[i]);
    if (!std::isfinite(values[i])) throw NonFiniteError("kappa returned a non-finite value", static_cast<std::size_t>(i));
  }
  return jackknife_mean(values);
}

Estimate counterfactual_metric(const OutcomeMechanism& mechanism, const Kappa& kappa,
                               const CovariateSource& source, const Predictor& predictor, Index n_mc,
                               std::uint64_t seed) {
  const OutcomeModel model = [&](const Matrix& x, const Vector& yhat, const std::vector<Index>& rows, Rng& rng) {
    return mechanism.sample(x, yhat, rng, rows);
  };
  return counterfactual_metric(model, kappa, source, predictor, n_mc, seed);
}

namespace {
std::string sidecar_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}
}  // namespace

void write_dataset(const Dataset& data, const std::string& csv_path) {
  data.validate();
  const Index d = data.dim();
  const Index extra = data.exposure ? 3 : 2;
  std::vector<std::string> columns;
  for (Index j = 0; j < d; ++j) columns.push_back("x" + std::to_string(j));
  columns.emplace_back("yhat");
  columns.emplace_back("y");
  if (data.exposure) columns.emplace_back("G");
  Matrix table(data.rows(), d + extra);
  table.leftCols(d) = data.x;
  table.col(d) = data.yhat;
  table.col(d + 1) = data.y;
  if (data.exposure) table.col(d + 2) = *data.exposure;
  write_numeric_csv(csv_path, columns, table);
  nlohmann::json side = data.provenance;
  side["columns"] = columns;
  write_text_file(sidecar_path(csv_path), side.dump(2) + "\n");
}

Dataset read_dataset(const std::string& csv_path) {
  const NumericCsv csv = read_numeric_csv(csv_path);
  Index d = 0;
  while (d < static_cast<Index>(csv.columns.size()) && csv.columns[static_cast<std::size_t>(d)] == "x" + std::to_string(d))
    ++d;
  const auto rest = static_cast<Index>(csv.columns.size()) - d;
  if (d == 0 || rest < 2 || csv.columns[static_cast<std::size_t>(d)] != "yhat" ||
      csv.columns[static_cast<std::size_t>(d + 1)] != "y" || (rest == 3 && csv.columns.back() != "G") || rest > 3)
    throw DomainError("'" + csv_path + "' does not have the x0..x{d-1},yhat,y[,G] layout");
  Dataset data;
  data.x = csv.values.leftCols(d);
  data.yhat = csv.values.col(d);
  data.y = csv.values.col(d + 1);
  if (rest == 3) data.exposure = Vector(csv.values.col(d + 2));
  const std::string side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) data.provenance = nlohmann::json::parse(read_text_file(side)).get<Provenance>();
  data.provenance.n = data.rows();
  return data;
}

}  // namespace perflab
