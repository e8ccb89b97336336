#include "perflab/csv.hpp"
#include "perflab/experiments.hpp"
#include "perflab/identify.hpp"
#include "perflab/interference.hpp"
#include "perflab/io.hpp"
#include "perflab/predictors.hpp"
#include "perflab/scm.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using json = nlohmann::json;
using namespace perflab;

constexpr int kExitCellFailure = 1;
constexpr int kExitConfig = 2;

// Problems with the request itself (flags, spec documents, input files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json load_spec(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

template <typename T>
T spec_get(const json& doc, const std::string& key) {
  if (!doc.contains(key)) throw ConfigError("/" + key + ": missing");
  try {
    return doc.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError("/" + key + ": " + e.what());
  }
}

template <typename T>
T spec_get(const json& doc, const std::string& key, const T& fallback) {
  return doc.contains(key) ? spec_get<T>(doc, key) : fallback;
}

CovariateSource source_from(const json& doc) {
  CovariateConfig c;
  if (doc.contains("covariates")) {
    const json& j = doc.at("covariates");
    c.kind = j.value("kind", c.kind);
    c.dim = j.value("dim", c.dim);
    c.path = j.value("path", c.path);
    c.label_column = j.value("label_column", c.label_column);
  }
  try {
    return make_source(c);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("/covariates: ") + e.what());
  }
}

std::string stem(const RunConfig& run, const std::string& name) {
  return (std::filesystem::path(run.output_dir) / (name + "__seed" + std::to_string(run.master_seed))).string();
}

void write_json(const std::string& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

int cmd_experiment(const RunConfig& run, const json& doc) {
  ExperimentSpec spec;
  try {
    spec = parse_experiment_spec(doc);
  } catch (const SpecError& e) {
    throw ConfigError(e.what());
  }
  spec.seed = run.master_seed;
  RunOptions options;
  options.jobs = run.jobs;
  options.on_cell = [](const CellReport& c) {
    std::cout << "cell sweep=" << format_double(c.sweep) << " replicate=" << c.replicate;
    if (!c.error.empty()) {
      std::cout << " FAILED: " << c.error << "\n";
      return;
    }
    for (const auto& [name, value] : c.metrics)
      if (name == "with-yhat" || name == "without-yhat" || name == "baseline")
        std::cout << " " << name << "=" << format_double(value);
    std::cout << "\n";
  };
  const ExperimentResult result = run_experiment(spec, options);
  const std::string base = stem(run, spec.template_name);
  export_result(result, ExportFormat::csv, base + ".csv");
  export_result(result, ExportFormat::json, base + ".json");
  std::cout << "wrote " << base << ".csv and " << base << ".json (" << result.failures.size() << " failed cells)\n";
  return result.failures.empty() ? 0 : kExitCellFailure;
}

int cmd_generate(const RunConfig& run, const json& doc) {
  const CovariateSource source = source_from(doc);
  const auto predictor = spec_get<Predictor>(doc, "predictor");
  auto mechanism = spec_get<OutcomeMechanism>(doc, "mechanism");
  const auto n = spec_get<Index>(doc, "n");
  const auto label = spec_get<std::string>(doc, "label", "data");
  const Dataset data = generate_dataset(source, predictor, mechanism, n, SeedPlan(run.master_seed), label);
  const std::string base = stem(run, spec_get<std::string>(doc, "name", "generate"));
  write_dataset(data, base + ".csv");
  std::cout << "generated " << data.rows() << " rows with predictor '" << predictor.id() << "' -> " << base << ".csv\n";
  return 0;
}

int cmd_fit(const RunConfig& run, const json& doc) {
  const Dataset train = read_dataset(spec_get<std::string>(doc, "data"));
  auto cls = spec_get<HypothesisClass>(doc, "class", HypothesisClass::linear(true));
  if (!doc.contains("class") || !doc.at("class").contains("train") || !doc.at("class").at("train").contains("init_seed"))
    cls.train.init_seed = SeedPlan(run.master_seed).stream("fit");
  const FittedModel model = fit_meta_model(train, cls);
  json out = {{"master_seed", run.master_seed}, {"spec", doc}, {"model", model}};
  if (doc.contains("test")) {
    const Dataset test = read_dataset(spec_get<std::string>(doc, "test"));
    const std::string metric = spec_get<std::string>(doc, "metric", "rmse");
    if (metric != "rmse" && metric != "accuracy") throw ConfigError("/metric: must be 'rmse' or 'accuracy'");
    const double v = evaluate(model, test, metric == "rmse" ? Metric::rmse : Metric::accuracy);
    out["test"] = {{"metric", metric}, {"value", v}};
    std::cout << "test " << metric << " = " << format_double(v) << "\n";
  }
  if (cls.include_prediction && (cls.kind == ModelKind::linear || cls.kind == ModelKind::polynomial))
    std::cout << "yhat coefficient = " << format_double(model.yhat_coefficient()) << "\n";
  const std::string base = stem(run, spec_get<std::string>(doc, "name", "fit"));
  write_json(base + ".json", out);
  std::cout << "wrote " << base << ".json\n";
  return 0;
}

int cmd_audit(const RunConfig& run, const json& doc) {
  const CovariateSource source = source_from(doc);
  const auto f_train = spec_get<Predictor>(doc, "train_predictor");
  const auto n = spec_get<Index>(doc, "n", 2000);
  const SeedPlan seeds(run.master_seed);
  json out = {{"master_seed", run.master_seed}, {"spec", doc}};
  if (doc.contains("target_predictor")) {
    const auto f_target = spec_get<Predictor>(doc, "target_predictor");
    OverlapConfig oc;
    oc.seed = seeds.stream("overlap");
    const std::string method = spec_get<std::string>(doc, "overlap_method", "automatic");
    if (method == "analytic") oc.method = OverlapMethod::analytic;
    else if (method == "empirical") oc.method = OverlapMethod::empirical;
    else if (method != "automatic") throw ConfigError("/overlap_method: must be automatic, analytic or empirical");
    const OverlapReport r = check_output_overlap(f_train, f_target, source, n, oc);
    out["overlap"] = r;
    std::cout << "overlap: " << (r.passed ? "pass" : "fail") << " (" << r.method << ")\n";
  }
  const double threshold = spec_get<double>(doc, "overparam_threshold", 0.01);
  const OverparamReport op =
      check_overparameterized(f_train, linear_basis(source.dim()), source, n, threshold, seeds.stream("overparam"));
  out["overparameterized"] = op;
  std::cout << "overparameterized: " << (op.passed ? "pass" : "fail") << " (residual ratio "
            << format_double(op.residual_ratio) << ")\n";
  const DiscreteReport dr = check_discrete(f_train, source, n, seeds.stream("discrete"));
  out["discrete"] = dr;
  std::cout << "discrete: " << (dr.passed ? "pass" : "fail") << " (" << dr.level_count << " levels)\n";
  if (doc.contains("data")) {
    const RDDFit fit = rdd_identify(read_dataset(spec_get<std::string>(doc, "data")));
    out["rdd"] = fit;
    std::cout << "rdd: " << fit.levels.size() << " levels\n";
  }
  const std::string base = stem(run, spec_get<std::string>(doc, "name", "audit"));
  write_json(base + ".json", out);
  std::cout << "wrote " << base << ".json\n";
  return 0;
}

int cmd_interference(const RunConfig& run, const json& doc) {
  const CovariateSource source = source_from(doc);
  const auto n = spec_get<Index>(doc, "n");
  const auto predictor = spec_get<Predictor>(doc, "predictor");
  NetworkSpec ns;
  if (doc.contains("network")) {
    const json& j = doc.at("network");
    const std::string method = j.value("method", std::string("knn"));
    if (method == "knn") ns.method = NetworkMethod::knn;
    else if (method == "clone-groups") ns.method = NetworkMethod::clone_groups;
    else throw ConfigError("/network/method: must be 'knn' or 'clone-groups'");
    ns.k = j.value("k", ns.k);
    ns.group_size = j.value("group_size", ns.group_size);
  }
  LinearInMeansConfig cfg;
  const json g1 = spec_get<json>(doc, "g1");
  cfg.g1 = LinearBase{Eigen::Map<const Vector>(g1.at("beta").get<std::vector<double>>().data(),
                                              static_cast<Index>(g1.at("beta").size())),
                      g1.value("intercept", 0.0)};
  cfg.alpha = spec_get<double>(doc, "alpha");
  cfg.beta_spill = spec_get<double>(doc, "beta_spill");
  cfg.noise = spec_get<NoiseSpec>(doc, "noise", NoiseSpec::none());
  for (const auto& w : cfg.warnings()) std::cout << "warning: " << w << "\n";

  const SeedPlan seeds(run.master_seed);
  Rng rx(seeds.stream("network/x"));
  const CovariateSample sample = source.sample(n, rx);
  const NetworkSample net = build_homophilous_network(sample.x, ns, seeds.stream("network"));
  std::vector<Index> rows;
  for (Index r : net.source_rows) rows.push_back(sample.rows.empty() ? r : sample.rows[static_cast<std::size_t>(r)]);
  if (net.source_rows.empty()) rows = sample.rows;
  const Dataset data = simulate_linear_in_means(net.network, net.x, predictor, cfg, seeds, "interference", rows);
  const InterferenceComparison cmp = fit_and_compare_interference(data);

  json out = {{"master_seed", run.master_seed},
              {"spec", doc},
              {"nodes", net.network.size()},
              {"homophily_delta", measure_homophily_delta(net.network, data.yhat)},
              {"comparison", cmp}};
  if (doc.contains("contrast")) {
    const json& c = doc.at("contrast");
    const Predictor next = c.at("new_predictor").get<Predictor>();
    const Index node = c.value("node", Index{0});
    const SpilloverContrast sc =
        unilateral_vs_population(net.network, net.x, data.yhat, next.deterministic(net.x), cfg, node);
    out["contrast"] = {{"node", sc.node},
                       {"unilateral_effect", sc.unilateral_effect},
                       {"population_effect", sc.population_effect}};
  }
  const std::string base = stem(run, spec_get<std::string>(doc, "name", "interference"));
  write_dataset(data, base + "__data.csv");
  write_network_csv(net.network, base + "__edges.csv");
  write_json(base + ".json", out);
  std::cout << "yhat coefficient without G = " << format_double(cmp.coef_yhat_without_g) << "\n";
  std::cout << "wrote " << base << ".json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate performative prediction, fit meta-models and audit identifiability."};
  app.require_subcommand(1);

  std::string spec_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_flag;
  int jobs = 1;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "Simulate a dataset from a predictor and an outcome mechanism"},
      {"fit", "Fit a meta-model to a dataset"},
      {"audit", "Run the identifiability checks for a training predictor"},
      {"experiment", "Run an experiment template"},
      {"interference", "Simulate a linear-in-means network and compare fits"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--spec", spec_path, "JSON spec file")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed_flag, "Master seed (falls back to $PERFLAB_SEED)");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  RunConfig run;
  run.command = app.get_subcommands().front()->get_name();
  run.spec_path = spec_path;
  run.output_dir = out_dir;
  run.jobs = jobs;
  try {
    run.validate();
    const json doc = load_spec(spec_path);
    std::uint64_t fallback = 0;
    if (run.command == "experiment" && doc.is_object() && doc.contains("seed")) fallback = doc.at("seed").get<std::uint64_t>();
    run.master_seed = resolve_master_seed(seed_flag, fallback);
    std::filesystem::create_directories(run.output_dir);

    if (run.command == "experiment") return cmd_experiment(run, doc);
    if (run.command == "generate") return cmd_generate(run, doc);
    if (run.command == "fit") return cmd_fit(run, doc);
    if (run.command == "audit") return cmd_audit(run, doc);
    return cmd_interference(run, doc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return run.spec_path.empty() || !std::filesystem::exists(run.spec_path) ? kExitConfig : kExitCellFailure;
  }
}
