#pragma once

#include "perflab/common.hpp"
#include "perflab/neural.hpp"
#include "perflab/noise.hpp"
#include "perflab/rng.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace perflab {

struct LinearModel {
  Vector weights;
  double intercept = 0.0;
};

/// Linear model over all monomials of the covariates up to `degree`, in the
/// order given by polynomial_terms().
struct PolynomialModel {
  Index input_dim = 0;
  int degree = 2;
  Vector weights;
  double intercept = 0.0;
};

struct NeuralModel {
  NeuralNet net;
};

/// Additive prediction noise, suppressed by the deterministic view.
struct NoiseWrapper {
  NoiseSpec noise;
};

/// Snaps predictions to the nearest level; exact midpoints go to the lower one.
struct DiscretizeWrapper {
  std::vector<double> levels;
};

using PredictorBase = std::variant<LinearModel, PolynomialModel, NeuralModel>;
using PredictorWrapper = std::variant<NoiseWrapper, DiscretizeWrapper>;

/// A (possibly randomized) map from covariates to a scalar prediction. Wrappers
/// apply in order on top of the base model.
class Predictor {
 public:
  Predictor() = default;
  Predictor(std::string id, PredictorBase base) : id_(std::move(id)), base_(std::move(base)) {}

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  const PredictorBase& base() const { return base_; }
  const std::vector<PredictorWrapper>& wrappers() const { return wrappers_; }
  std::string kind() const;
  Index input_dim() const;

  /// True when no wrapper draws randomness.
  bool is_deterministic() const;

  Predictor with_wrapper(PredictorWrapper w) const;

  /// One draw per row; noise wrappers consume `rng`.
  Vector predict(const Matrix& x, Rng& rng) const;

  /// Evaluation with noise suppressed; seed independent.
  Vector deterministic(const Matrix& x) const;

  /// The base model alone, before any wrapper.
  Vector base_predict(const Matrix& x) const;

  const LinearModel& linear() const;

 private:
  Vector apply(const Matrix& x, Rng* rng) const;

  std::string id_;
  PredictorBase base_;
  std::vector<PredictorWrapper> wrappers_;
};

void to_json(nlohmann::json& j, const Predictor& p);
void from_json(const nlohmann::json& j, Predictor& p);

/// Monomial exponent lists of total degree 1..degree over `dim` variables;
/// degree 2 yields every x_j and every product x_j x_l with j <= l.
std::vector<std::vector<int>> polynomial_terms(Index dim, int degree);
Matrix expand_polynomial(const Matrix& x, int degree);

/// Label permutation / flipping applied before fitting a test-time predictor.
struct ShuffleSpec {
  std::uint64_t seed = 0;
  double fraction = 1.0;
  std::optional<double> flip_gamma;
};

struct FitOptions {
  bool allow_minimum_norm = false;
  Index max_features = 512;
  std::string id;
};

/// Least-squares linear predictor with intercept. Requires n > d unless
/// `allow_minimum_norm` is set.
Predictor fit_linear_predictor(const Matrix& covariates, const Vector& labels,
                               const FitOptions& options = {});

/// Fits a linear predictor after shuffling and/or flipping labels.
Predictor make_test_predictor(const Matrix& covariates, const Vector& labels,
                              const ShuffleSpec& spec, const FitOptions& options = {});

/// Applies the shuffle spec to a copy of the labels.
Vector shuffle_labels(const Vector& labels, const ShuffleSpec& spec);

/// Convex combination rho * a + (1 - rho) * b of two linear predictors.
Predictor interpolate(const Predictor& theta, const Predictor& phi, double rho);

Predictor wrap_noise(const Predictor& base, const NoiseSpec& noise);
Predictor wrap_discretize(const Predictor& base, std::vector<double> levels);

/// Index of the level nearest to `value`, ties to the lower level.
std::size_t nearest_level(const std::vector<double>& levels, double value);

/// `count` levels at the (k + 0.5) / count empirical quantiles of `values`.
std::vector<double> quantile_levels(const Vector& values, int count);

/// Degree-k least-squares polynomial predictor.
Predictor fit_overparam_predictor(const Matrix& covariates, const Vector& labels, int degree,
                                  const FitOptions& options = {});

/// Builds a polynomial predictor from explicit coefficients.
Predictor make_polynomial_predictor(Index dim, int degree, Vector weights, double intercept,
                                    std::string id = "polynomial");

Predictor make_linear_predictor(Vector weights, double intercept, std::string id = "linear");

Predictor fit_neural_predictor(const Matrix& covariates, const Vector& labels, Index units,
                               const TrainConfig& config, TrainReport* report = nullptr);

}  // namespace perflab
