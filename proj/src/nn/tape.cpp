#include "ipnmt/nn/tape.hpp"

#include "ipnmt/errors.hpp"
#include "ipnmt/nn/kernels.hpp"

namespace ipnmt::nn {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{{}, &param.value, {}, {}, true});
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(&param, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), nullptr, {},
                        requires_grad ? std::move(backward) : Backward{},
                        requires_grad});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& node = nodes_[id];
  return node.external ? *node.external : node.value;
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) {
    node.grad = Tensor::zeros_like(node.external ? *node.external : node.value);
  }
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw PreconditionError("backward: root from another tape");
  if (value(root.id()).size() != 1) {
    throw DimensionError("backward: root must be scalar, got shape " +
                         shape_to_string(value(root.id()).shape()));
  }
  grad(root.id())[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    require_finite(node.grad.values(), "backward pass");
    node.backward(*this, i);
  }
}

void Tape::accumulate_parameter_gradients() {
  for_each_parameter_gradient([](Parameter& param, const Tensor& g) {
    kernels::serial::axpy(1.0, g.values(), param.gradient.values());
  });
}

}  // namespace ipnmt::nn
