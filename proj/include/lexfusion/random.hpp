#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "lexfusion/tensor.hpp"

namespace lexfusion {

// mt19937_64 output is fixed by the standard; the standard distributions are
// not, so the helpers below derive values from raw draws to stay
// reproducible across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, bound).
inline std::size_t uniform_index(Rng& rng, std::size_t bound) {
  const std::uint64_t b = bound;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % b;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % b);
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);

/// Glorot-uniform initialisation for a fan_in x fan_out weight.
Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace lexfusion
