#pragma once

#include "perflab/common.hpp"
#include "perflab/covariates.hpp"
#include "perflab/estimators.hpp"
#include "perflab/neural.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace perflab {

/// Invalid experiment document; `pointer` is a JSON pointer to the field.
class SpecError : public Error {
 public:
  SpecError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

/// Synthetic stand-in for the original labelled data:
/// y = intercept + beta^T x + quad * sum_j s_j x_j x_{j+1} + ridge * tanh(slope * v^T x) + N(0, noise^2)
/// with s_j alternating in sign and v = (1, ..., 1) / sqrt(d). Binary labels
/// (misspecification study) are Bernoulli(sigmoid(steepness * (y - intercept))).
struct ReferenceTask {
  Index n = 50000;
  double intercept = 40.0;
  std::vector<double> beta;  // empty: default pattern for the covariate dimension
  double quad = 0.5;
  double ridge = 0.0;
  double slope = 1.0;
  double noise = 1.0;
  double steepness = 1.5;
};

struct CovariateConfig {
  std::string kind = "synthetic-gaussian";  // or "csv"
  Index dim = 5;
  std::string path;
  std::string label_column;
};

struct ExperimentSpec {
  std::string template_name;
  std::string description;
  std::string sweep_parameter;
  std::vector<double> sweep_values;
  Index n_train = 200000;
  Index n_test = 50000;
  int replicates = 10;
  double alpha = 0.5;
  double p = 0.5;
  double gamma = 0.45;
  bool reversed = false;
  double noise_scale = 1.0;  // prediction noise of randomized f_theta
  double outcome_noise = 1.0;
  int levels = 4;
  int degree = 2;
  Index m_theta = 16;
  Index m_g = 3;
  double rho = 0.0;
  std::optional<HypothesisClass> meta_class;
  TrainConfig train;  // networks for g1, f_theta and neural meta-models
  ReferenceTask reference;
  CovariateConfig covariates;
  std::uint64_t seed = 0;

  /// Fills template defaults and checks the sweep parameter belongs to the
  /// template. Throws SpecError.
  void validate() const;
};

/// Parses and validates a spec document, applying template defaults.
ExperimentSpec parse_experiment_spec(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentSpec& spec);

/// Templates known to the harness.
const std::vector<std::string>& experiment_templates();

/// Default spec for a template.
ExperimentSpec default_spec(const std::string& template_name);

struct ResultRow {
  double sweep = 0.0;
  std::string condition;
  double mean = 0.0;
  double std_error = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> values;  // indexed by replicate
};

struct CellFailure {
  double sweep = 0.0;
  int replicate = 0;
  std::string message;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::string metric;  // "rmse" or "accuracy"
  std::vector<ResultRow> rows;         // conditions: with-yhat, without-yhat, baseline
  std::vector<ResultRow> diagnostics;  // e.g. d_sq, yhat-coef, rank-deficient
  std::vector<CellFailure> failures;

  const ResultRow& row(double sweep, const std::string& condition) const;
  const ResultRow& diagnostic(double sweep, const std::string& name) const;
};

/// Summary of one finished (sweep value, replicate) cell.
struct CellReport {
  double sweep = 0.0;
  int replicate = 0;
  std::vector<std::pair<std::string, double>> metrics;
  std::string error;
};

struct RunOptions {
  int jobs = 1;
  std::function<void(const CellReport&)> on_cell;  // called from a single thread, in replicate order
};

/// Runs every (sweep value, replicate) cell. Replicates are independent work
/// units on derived seeds; aggregation sorts by (sweep value, replicate).
ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// The misspecification study (template appD-misspec).
ExperimentResult run_misspec_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// CSV `sweep,condition,mean,stderr,replicates`.
std::string result_csv(const ExperimentResult& result);
nlohmann::json result_json(const ExperimentResult& result);
ExperimentResult result_from_json(const nlohmann::json& doc);

enum class ExportFormat { csv, json };
void export_result(const ExperimentResult& result, ExportFormat format, const std::string& path);

/// Sample std / sqrt(count); zero for a single value.
double standard_error(const std::vector<double>& values);

/// Covariate source for a spec (synthetic Gaussian or CSV table).
CovariateSource make_source(const CovariateConfig& config);

}  // namespace perflab
