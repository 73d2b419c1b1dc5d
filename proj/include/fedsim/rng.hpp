#pragma once

#include "fedsim/types.hpp"

#include <cstdint>
#include <random>
#include <span>

namespace fedsim {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for the stream identified by (run seed, a, b). Order-independent of
// how the streams are consumed, so parallel evaluation cannot change results.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

// Stream tags for derive_seed.
enum class Stream : std::uint64_t {
  Data = 0x1001,
  Partition = 0x1002,
  Init = 0x1003,
  Selection = 0x1004,
  LocalUpdate = 0x1005,
  Probe = 0x1006,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(seed ^ static_cast<std::uint64_t>(stream), a, b));
}

double uniform01(Rng& rng);

// ln of a Gamma(alpha, 1) draw. Works for alpha down to ~1e-6 without
// underflow by using G(alpha) = G(alpha + 1) * U^(1/alpha) in log space.
double log_gamma_draw(double alpha, Rng& rng);

// Draw from a symmetric Dirichlet(alpha) of the given dimension. If every
// component underflows, returns a one-hot vector on a uniformly chosen index.
Vector dirichlet_draw(double alpha, Index dim, Rng& rng);

// Categorical draw proportional to non-negative weights.
Index categorical_draw(std::span<const double> weights, Rng& rng);

}  // namespace fedsim
