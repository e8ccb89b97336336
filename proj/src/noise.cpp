#include "perflab/noise.hpp"

#include <json.hpp>

#include <cmath>

namespace perflab {

NoiseSpec NoiseSpec::gaussian(double sigma, NoiseTarget t) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("gaussian sigma must be >= 0");
  return {NoiseFamily::gaussian, sigma, t};
}

NoiseSpec NoiseSpec::laplace(double b, NoiseTarget t) {
  if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("laplace scale must be > 0");
  return {NoiseFamily::laplace, b, t};
}

NoiseSpec NoiseSpec::uniform(double half_width, NoiseTarget t) {
  if (!(half_width >= 0.0) || !std::isfinite(half_width)) throw DomainError("uniform half-width must be >= 0");
  return {NoiseFamily::uniform, half_width, t};
}

double NoiseSpec::sample(Rng& rng) const {
  switch (family) {
    case NoiseFamily::none:
      return 0.0;
    case NoiseFamily::gaussian:
      return scale == 0.0 ? 0.0 : scale * rng.normal();
    case NoiseFamily::laplace:
      return rng.laplace(scale);
    case NoiseFamily::uniform:
      return scale == 0.0 ? 0.0 : rng.uniform(-scale, scale);
  }
  return 0.0;
}

double NoiseSpec::variance() const {
  switch (family) {
    case NoiseFamily::none:
      return 0.0;
    case NoiseFamily::gaussian:
      return scale * scale;
    case NoiseFamily::laplace:
      return 2.0 * scale * scale;
    case NoiseFamily::uniform:
      return scale * scale / 3.0;
  }
  return 0.0;
}

NLOHMANN_JSON_SERIALIZE_ENUM(NoiseFamily, {{NoiseFamily::none, "none"},
                                           {NoiseFamily::gaussian, "gaussian"},
                                           {NoiseFamily::laplace, "laplace"},
                                           {NoiseFamily::uniform, "uniform"}})
NLOHMANN_JSON_SERIALIZE_ENUM(NoiseTarget, {{NoiseTarget::prediction, "prediction"},
                                           {NoiseTarget::outcome, "outcome"}})

void to_json(nlohmann::json& j, const NoiseSpec& n) {
  j = nlohmann::json{{"family", n.family}, {"scale", n.scale}, {"applies_to", n.applies_to}};
}

void from_json(const nlohmann::json& j, NoiseSpec& n) {
  n.family = j.at("family").get<NoiseFamily>();
  n.scale = j.value("scale", 0.0);
  n.applies_to = j.value("applies_to", NoiseTarget::outcome);
  if (!(n.scale >= 0.0)) throw DomainError("noise scale must be >= 0");
  if (n.family == NoiseFamily::laplace && n.scale <= 0.0) throw DomainError("laplace scale must be > 0");
}

}  // namespace perflab
