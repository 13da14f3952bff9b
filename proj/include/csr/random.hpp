#pragma once

#include <cstdint>
#include <random>

namespace csr {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from one base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632BE59BD9B4E019ULL));
}

inline Rng make_rng(std::uint64_t base, std::uint64_t stream = 0) {
  return Rng(derive_seed(base, stream));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace csr
