#include "lexfusion/optim.hpp"

#include <cmath>

namespace lexfusion {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config) {
  if (!param.same_shape(grad)) {
    throw ShapeError("adam_step: parameter " + shape_string(param.shape()) +
                     " vs gradient " + shape_string(grad.shape()));
  }
  if (state.first_moment.empty() && param.size() != 0) {
    state.first_moment = Tensor(param.shape());
    state.second_moment = Tensor(param.shape());
  }
  if (!state.first_moment.same_shape(param)) {
    throw ShapeError("adam_step: optimizer state " + shape_string(state.first_moment.shape()) +
                     " vs parameter " + shape_string(param.shape()));
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grad[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), states_(params_.size()), config_(config) {}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (!p.grad.same_shape(p.value)) p.zero_grad();
    adam_step(p.value, p.grad, states_[i], config_);
    p.grad.fill(0.0);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace lexfusion
