#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace loadwave::noise {

// Counter-based randomness: every draw is a pure function of
// (seed, stream, index), so a simulated signal can be evaluated at any
// instant in any order and still be reproducible byte-for-byte.

constexpr std::uint64_t mix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  return mix(mix(mix(seed) ^ stream) ^ index);
}

/// Uniform in [0, 1).
constexpr double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  return static_cast<double>(hash(seed, stream, index) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two independent counter draws.
inline double gaussian(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  const double u1 = 1.0 - uniform(seed, stream, 2 * index);  // (0, 1]
  const double u2 = uniform(seed, stream, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Signed slot index for piecewise-constant processes; works for t < 0.
inline std::uint64_t slot(double t, double slot_s) noexcept {
  return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(t / slot_s)));
}

}  // namespace loadwave::noise
