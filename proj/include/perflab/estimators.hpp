#pragma once

#include "perflab/common.hpp"
#include "perflab/neural.hpp"
#include "perflab/scm.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace perflab {

enum class ModelKind { linear, polynomial, neural, logistic, boosted_stumps };

/// Function family for the meta-model. Features are laid out as
/// [x_0..x_{d-1}, yhat, G] with yhat and the network exposure G optional.
struct HypothesisClass {
  ModelKind kind = ModelKind::linear;
  bool include_prediction = true;
  bool include_exposure = false;
  int degree = 2;  // polynomial: expands x only; yhat and G enter linearly
  Index units = 3;  // neural: yhat bypasses the hidden layer
  int restarts = 1;  // neural: keeps the initialization with the lowest training risk
  TrainConfig train;
  int rounds = 100;  // boosted stumps
  double shrinkage = 0.3;
  int iterations = 2000;  // logistic
  double step = 0.5;

  static HypothesisClass linear(bool with_prediction = true) {
    HypothesisClass c;
    c.include_prediction = with_prediction;
    return c;
  }
};

void to_json(nlohmann::json& j, const HypothesisClass& c);
void from_json(const nlohmann::json& j, HypothesisClass& c);

struct Stump {
  Index feature = 0;
  double threshold = 0.0;
  double left = 0.0;  // value for feature <= threshold
  double right = 0.0;
};

struct FitDiagnostics {
  double final_risk = 0.0;  // mean squared error, or mean log loss for logistic
  int iterations = 0;
  bool rank_deficient = false;
  Index rank = 0;
  bool converged = true;
};

/// Result of empirical risk minimization over a hypothesis class.
struct FittedModel {
  HypothesisClass cls;
  Index input_dim = 0;  // number of x columns
  // linear, polynomial, logistic: one weight per feature plus intercept.
  Vector weights;
  double intercept = 0.0;
  Vector std_errors;  // linear/polynomial: analytic OLS standard errors, intercept last
  std::optional<NeuralNet> net;
  double base_score = 0.0;
  std::vector<Stump> stumps;
  FitDiagnostics diagnostics;

  /// Predicted y (a probability for logistic). `yhat` and `exposure` are
  /// required exactly when the class uses them.
  Vector predict(const Matrix& x, const Vector* yhat = nullptr, const Vector* exposure = nullptr) const;
  Vector predict(const Dataset& data) const;

  /// Coefficients of a linear-kind model.
  double yhat_coefficient() const;
  double exposure_coefficient() const;
  Vector x_coefficients() const;
  double yhat_std_error() const;
};

void to_json(nlohmann::json& j, const FittedModel& m);
void from_json(const nlohmann::json& j, FittedModel& m);

/// Empirical risk minimizer of Eq. h_SL over the class on the dataset.
FittedModel fit_meta_model(const Dataset& data, const HypothesisClass& cls);

enum class Metric { rmse, accuracy };

/// RMSE, or accuracy of predictions thresholded at 0.5 against labels.
double evaluate(const FittedModel& model, const Dataset& data, Metric metric);

/// Stagewise least-squares boosting of depth-one trees.
FittedModel fit_boosted_stumps(const Dataset& data, int rounds, double shrinkage, bool include_prediction = true);

/// Logistic regression by full-batch gradient ascent on the mean log-likelihood,
/// stopping at gradient norm < 1e-6 or the iteration cap.
FittedModel fit_logistic(const Dataset& data, int iterations, double step, bool include_prediction = true);

/// Design columns [x, yhat?, G?] used by the class (before any expansion).
Matrix meta_features(const Matrix& x, const Vector* yhat, const Vector* exposure, const HypothesisClass& cls);

/// Wraps a fitted model as the outcome model of counterfactual_metric.
OutcomeModel as_outcome_model(const FittedModel& model);

}  // namespace perflab
