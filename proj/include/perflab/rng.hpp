#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace perflab {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over the bytes of a label.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic derivation of independent stream seeds from one master seed.
///
/// stream(label, r) = mix64(mix64(master ^ mix64(fnv1a(label))) + mix64(r + 1))
///
/// The derivation is pure, so replicate r of a given label always receives the
/// same seed no matter which thread or in which order it is requested.
class SeedPlan {
 public:
  constexpr SeedPlan() = default;
  constexpr explicit SeedPlan(std::uint64_t master) : master_(master) {}

  constexpr std::uint64_t master() const noexcept { return master_; }

  constexpr std::uint64_t stream(std::string_view label,
                                 std::uint64_t replicate = 0) const noexcept {
    const std::uint64_t keyed = mix64(master_ ^ mix64(hash_label(label)));
    return mix64(keyed + mix64(replicate + 1));
  }

  /// A plan whose master is a derived stream; used to hand a sub-experiment its
  /// own namespace of streams.
  constexpr SeedPlan child(std::string_view label,
                           std::uint64_t replicate = 0) const noexcept {
    return SeedPlan(stream(label, replicate));
  }

 private:
  std::uint64_t master_ = 0;
};

/// Random source used throughout the library. Wraps std::mt19937_64 and draws
/// uniforms directly from the engine bits so sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Laplace(0, scale) by inverse CDF.
  double laplace(double scale);

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace perflab
