#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace msn {

using Rng = std::mt19937_64;

// Independent stream for item `index` of a run seeded with `seed`.
inline Rng substream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x4d534e5fu};
  return Rng(seq);
}

template <class T>
void fill_normal(std::span<T> out, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : out) v = static_cast<T>(dist(rng));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace msn
