#include "lexfusion/tape.hpp"

#include <string>

namespace lexfusion {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

void Parameter::zero_grad() {
  if (!grad.same_shape(value)) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  return record("constant", std::move(value), std::span<const Var>{}, nullptr);
}

Var Tape::leaf(Tensor value) {
  Var v = record("leaf", std::move(value), std::span<const Var>{}, nullptr);
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Tape::param(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var(this, it->second);
  if (!param.value.all_finite()) {
    throw NumericError("parameter '" + param.name + "' holds non-finite values");
  }
  Var v = leaf(param.value);
  nodes_[v.id()].param = &param;
  bound_.emplace(&param, v.id());
  return v;
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs,
                 Backward backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op) + " (shape " +
                       shape_string(value.shape()) + ")");
  }
  bool needs_grad = false;
  for (const Var& in : inputs) {
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_string(loss.shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, id);
  }
  for (Node& node : nodes_) {
    if (node.param == nullptr || node.grad.empty()) continue;
    Parameter& p = *node.param;
    if (!p.grad.same_shape(p.value)) p.zero_grad();
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += node.grad[i];
  }
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

}  // namespace lexfusion
