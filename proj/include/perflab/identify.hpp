#pragma once

#include "perflab/common.hpp"
#include "perflab/covariates.hpp"
#include "perflab/estimators.hpp"
#include "perflab/predictors.hpp"
#include "perflab/scm.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace perflab {

enum class OverlapMethod { automatic, analytic, empirical };

struct OverlapConfig {
  OverlapMethod method = OverlapMethod::automatic;
  int cells_per_marginal = 8;
  int max_cells = 64;
  double window_factor = 0.05;  // times the std of the training predictions
  int draws_per_point = 64;
  std::uint64_t seed = 0;
};

struct OverlapCell {
  std::string id;
  double target_lo = 0.0;
  double target_hi = 0.0;
  // analytic: smallest per-point mass; empirical: share of all redraws in the
  // cell landing within the window of their point's target value
  double mass = 0.0;
  Index points = 0;
  bool positive = false;
};

/// Output-overlap audit. Covariate cells come from a quantile grid over the
/// leading marginals; at each sampled x the training predictor is redrawn
/// `draws_per_point` times and the hits within the window of f_target(x) are
/// pooled per cell. Cells without sample points are omitted.
struct OverlapReport {
  bool passed = false;
  std::string method;
  bool fell_back = false;  // analytic mode was requested for an unsupported wrapper
  std::string note;
  double window = 0.0;
  std::vector<OverlapCell> cells;
};

OverlapReport check_output_overlap(const Predictor& f_train, const Predictor& f_target, const CovariateSource& source,
                                   Index n_mc, const OverlapConfig& config = {});

using BasisFunction = std::function<Vector(const Matrix&)>;

/// {1, x_0, ..., x_{d-1}}.
std::vector<BasisFunction> linear_basis(Index dim);

struct OverparamReport {
  double residual_ratio = 0.0;
  double threshold = 0.01;
  bool passed = false;
};

/// Relative residual of projecting f_train's deterministic view onto span(basis).
OverparamReport check_overparameterized(const Predictor& f_train, const std::vector<BasisFunction>& basis,
                                        const Matrix& sample, double threshold = 0.01);
OverparamReport check_overparameterized(const Predictor& f_train, const std::vector<BasisFunction>& basis,
                                        const CovariateSource& source, Index n_sample, double threshold = 0.01,
                                        std::uint64_t seed = 0);
/// Same check on precomputed values f(x_i).
OverparamReport check_overparameterized(const Vector& values, const std::vector<BasisFunction>& basis,
                                        const Matrix& sample, double threshold = 0.01);

struct DiscreteReport {
  bool passed = false;
  Index level_count = 0;
  std::vector<double> levels;
  std::vector<Index> counts;
};

/// Prediction values rounded to 12 significant digits.
double round_significant(double v);

/// Distinct values of the predictions; passes when there are at least two and
/// no more than `continuity_fraction` * n of them.
DiscreteReport check_discrete(const Vector& predictions, double continuity_fraction = 0.5);
DiscreteReport check_discrete(const Predictor& f_train, const CovariateSource& source, Index n_sample,
                              std::uint64_t seed = 0, double continuity_fraction = 0.5);

/// Separable fit y = g1(x) + offset(level(yhat)) with level indicators.
struct RDDFit {
  std::vector<double> levels;
  std::vector<double> offsets;  // offsets[0] == 0
  std::vector<double> offset_std_errors;
  std::vector<Index> counts;
  HypothesisClass base_class;
  Vector base_weights;
  double base_intercept = 0.0;
  std::string anchor = "first-level";
  bool rank_deficient = false;

  Vector base_predict(const Matrix& x) const;
  /// g1_hat(x) + offset of the level nearest to yhat.
  Vector predict(const Matrix& x, const Vector& yhat) const;
};

void to_json(nlohmann::json& j, const RDDFit& f);

RDDFit rdd_identify(const Dataset& data, const HypothesisClass& base_class = HypothesisClass::linear(false));

/// Population solutions of the collinear linear case yhat = theta^T x.
struct AnalyticLinearCase {
  Vector agnostic_weights;  // beta + alpha * theta
  Vector theta;

  /// Member of the empirical-risk-equivalent family with yhat-coefficient c:
  /// (beta + (alpha - c) theta, c).
  std::pair<Vector, double> member(double c) const;
};

AnalyticLinearCase analytic_linear_case(const Vector& beta, double alpha, const Vector& theta);

void to_json(nlohmann::json& j, const OverlapReport& r);
void to_json(nlohmann::json& j, const OverparamReport& r);
void to_json(nlohmann::json& j, const DiscreteReport& r);

}  // namespace perflab
