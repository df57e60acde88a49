#pragma once

#include <cstdint>
#include <random>

namespace misconv {

/// The single generator family used everywhere a seed appears.
using Rng = std::mt19937_64;

/// Mixes `base` and `stream` into an independent seed (SplitMix64 finalizer).
/// Used to give every example, batch or worker its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace misconv
