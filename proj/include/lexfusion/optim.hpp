#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lexfusion/tape.hpp"

namespace lexfusion {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one tensor plus the step counter.
struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  long step = 0;
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config);

/// Adam over a fixed, ordered parameter list. Gradients are consumed and
/// zeroed by step().
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void step();
  void zero_grad();
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
  AdamConfig config_;
};

}  // namespace lexfusion
