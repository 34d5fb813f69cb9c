#include "lexfusion/random.hpp"

#include <cmath>

namespace lexfusion {

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor out(std::move(shape));
  for (double& v : out.values()) v = uniform(rng, lo, hi);
  return out;
}

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor({fan_in, fan_out}, -limit, limit, rng);
}

}  // namespace lexfusion
