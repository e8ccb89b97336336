#pragma once

#include "perflab/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace perflab {

enum class Optimizer { adam, levenberg_marquardt };

/// Training settings for the one-hidden-layer network. Adam runs mini-batch
/// epochs; Levenberg-Marquardt runs full-batch and reads `epochs` as its
/// iteration budget and `tolerance` as its relative stopping tolerance.
struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  int epochs = 200;
  double step = 1e-3;
  int batch = 256;
  std::uint64_t init_seed = 0;
  // Early stop once the epoch loss has not improved on its best by more than
  // `tolerance` for `patience` consecutive epochs.
  double tolerance = 1e-6;
  int patience = 10;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainReport {
  int epochs_run = 0;
  bool early_stopped = false;
  double final_loss = 0.0;  // standardized units
  std::vector<double> epoch_losses;
};

/// y = out_scale * (w2 . tanh(W1^T z + b1) + b2 + skip * z_last) + out_mean,
/// where z is the z-scored input. When `linear_last_input` is set the final
/// input column bypasses the hidden layer and enters through `skip` only, so the
/// network is separable in that column and linear in it.
struct NeuralNet {
  Matrix w1;  // hidden_inputs x units
  Vector b1;
  Vector w2;
  double b2 = 0.0;
  bool linear_last_input = false;
  double skip = 0.0;
  Vector in_mean;
  Vector in_scale;
  double out_mean = 0.0;
  double out_scale = 1.0;

  Index input_dim() const { return in_mean.size(); }
  Index units() const { return w1.cols(); }

  Vector predict(const Matrix& inputs) const;

  /// Coefficient of the bypass column in raw (unstandardized) units.
  double raw_skip_coefficient() const;
};

void to_json(nlohmann::json& j, const NeuralNet& n);
void from_json(const nlohmann::json& j, NeuralNet& n);

/// Fits the network on squared loss (Adam or Levenberg-Marquardt) with tanh hidden units and
/// N(0, 1/fan_in) initialization. Throws Error naming the epoch if the loss
/// becomes non-finite.
NeuralNet fit_network(const Matrix& inputs, const Vector& targets, Index units,
                      const TrainConfig& config, bool linear_last_input = false,
                      TrainReport* report = nullptr);

}  // namespace perflab
