#pragma once

#include "perflab/common.hpp"
#include "perflab/covariates.hpp"
#include "perflab/neural.hpp"
#include "perflab/noise.hpp"
#include "perflab/predictors.hpp"
#include "perflab/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace perflab {

struct LinearBase {
  Vector beta;
  double intercept = 0.0;
};

struct NeuralBase {
  NeuralNet net;
};

/// g1 as a stored label per covariate-table row. Draws carry their source row;
/// bare covariate vectors are matched against `table` exactly.
struct LabelLookup {
  Matrix table;
  Vector labels;
};

struct LinearPerformativity {
  double alpha = 0.0;
};

/// y = yhat with probability p, otherwise g1(x).
struct ReplacePerformativity {
  double p = 0.0;
};

using BaseFunction = std::variant<LinearBase, NeuralBase, LabelLookup>;
using Performativity = std::variant<LinearPerformativity, ReplacePerformativity>;

/// Structural outcome equation Y = g(X, Yhat) + xi_Y.
struct OutcomeMechanism {
  std::string id = "mechanism";
  BaseFunction base;
  Performativity performativity;
  NoiseSpec noise;

  static OutcomeMechanism linear(Vector beta, double intercept, double alpha,
                                 NoiseSpec noise = NoiseSpec::none());

  Index input_dim() const;

  /// g1 on each row. `rows` are source-table rows, used by label lookups.
  Vector base_value(const Matrix& x, const std::vector<Index>& rows = {}) const;

  /// E[Y | x, do(yhat)] row by row.
  Vector expected(const Matrix& x, const Vector& yhat, const std::vector<Index>& rows = {}) const;

  /// One outcome draw per row.
  Vector sample(const Matrix& x, const Vector& yhat, Rng& rng,
                const std::vector<Index>& rows = {}) const;

  void validate() const;
};

void to_json(nlohmann::json& j, const OutcomeMechanism& m);
void from_json(const nlohmann::json& j, OutcomeMechanism& m);

struct Provenance {
  std::string predictor_id;
  nlohmann::json mechanism;
  nlohmann::json source;
  std::uint64_t master_seed = 0;
  Index n = 0;
  std::string stream_label;
};

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);

/// Observed (x, yhat, y) rows, plus the neighbour-mean exposure when simulated
/// on a network.
struct Dataset {
  Matrix x;
  Vector yhat;
  Vector y;
  std::optional<Vector> exposure;
  std::vector<Index> source_rows;
  Provenance provenance;

  Index rows() const { return x.rows(); }
  Index dim() const { return x.cols(); }

  /// Throws DimensionError on ragged columns and NonFiniteError on NaN/inf.
  void validate() const;
};

/// Samples n rows of the SCM. Covariates, prediction noise and outcome noise
/// use the streams "<label>/x", "<label>/yhat" and "<label>/y".
Dataset generate_dataset(const CovariateSource& source, const Predictor& predictor,
                         const OutcomeMechanism& mechanism, Index n, const SeedPlan& seeds,
                         const std::string& label = "data");

/// Outcomes for given covariates and predictions, drawn from the "<label>/y" stream.
Vector draw_outcomes(const OutcomeMechanism& mechanism, const Matrix& x, const Vector& yhat,
                     const std::vector<Index>& rows, const SeedPlan& seeds, const std::string& label);

/// M_Y(x, yhat) = g(x, yhat).
double ground_truth_m_y(const OutcomeMechanism& mechanism, const Vector& x, double yhat);

/// Monte Carlo E_x (f_a(x) - f_b(x))^2 with both predictors in deterministic view.
Estimate prediction_distance_sq(const Predictor& f_a, const Predictor& f_b, const CovariateSource& source,
                                Index n_mc, std::uint64_t seed);

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// ((mu / 2) alpha^2 d^2, (gamma / 2) alpha^2 d^2).
Bounds prop1_bounds(double alpha, double d_sq, double mu, double gamma);

using Kappa = std::function<double(const Vector& x, double y, double yhat)>;

/// Outcome model used by counterfactual_metric: returns y for each row given
/// (x, yhat, source rows).
using OutcomeModel =
    std::function<Vector(const Matrix& x, const Vector& yhat, const std::vector<Index>& rows, Rng& rng)>;

/// E[kappa(X, Y, Yhat)] under do(Yhat = predictor(X)).
Estimate counterfactual_metric(const OutcomeModel& outcome, const Kappa& kappa, const CovariateSource& source,
                               const Predictor& predictor, Index n_mc, std::uint64_t seed);

/// Ground-truth variant: outcomes are sampled from the mechanism.
Estimate counterfactual_metric(const OutcomeMechanism& mechanism, const Kappa& kappa,
                               const CovariateSource& source, const Predictor& predictor, Index n_mc,
                               std::uint64_t seed);

/// CSV with header x0..x{d-1},yhat,y[,G] and a JSON provenance record next to
/// it (same path, extension replaced by .json).
void write_dataset(const Dataset& data, const std::string& csv_path);
Dataset read_dataset(const std::string& csv_path);

}  // namespace perflab
