#pragma once

#include "perflab/common.hpp"
#include "perflab/rng.hpp"

#include <json.hpp>

namespace perflab {

enum class NoiseFamily { none, gaussian, laplace, uniform };
enum class NoiseTarget { prediction, outcome };

/// Additive zero-mean noise. `scale` is sigma for gaussian, b for laplace and
/// the half-width for uniform.
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::none;
  double scale = 0.0;
  NoiseTarget applies_to = NoiseTarget::outcome;

  static NoiseSpec none(NoiseTarget t = NoiseTarget::outcome) { return {NoiseFamily::none, 0.0, t}; }
  static NoiseSpec gaussian(double sigma, NoiseTarget t = NoiseTarget::outcome);
  static NoiseSpec laplace(double b, NoiseTarget t = NoiseTarget::outcome);
  static NoiseSpec uniform(double half_width, NoiseTarget t = NoiseTarget::outcome);

  /// True when every draw is exactly zero.
  bool is_degenerate() const { return family == NoiseFamily::none || scale == 0.0; }

  /// True when the noise density is positive on the whole real line.
  bool has_full_support() const {
    return !is_degenerate() && (family == NoiseFamily::gaussian || family == NoiseFamily::laplace);
  }

  double sample(Rng& rng) const;
  double variance() const;
};

void to_json(nlohmann::json& j, const NoiseSpec& n);
void from_json(const nlohmann::json& j, NoiseSpec& n);

}  // namespace perflab
