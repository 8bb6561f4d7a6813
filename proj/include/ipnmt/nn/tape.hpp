#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <unordered_map>

#include "ipnmt/nn/parameter.hpp"
#include "ipnmt/nn/tensor.hpp"

namespace ipnmt::nn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Linear record of a computation for reverse-mode differentiation. Every op
// appends one node carrying its forward value and a closure that pushes the
// node's gradient into its inputs. backward() replays closures in reverse.
//
// A tape is single-threaded. Batch training gives each worker its own tape
// and merges parameter gradients afterwards.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is kept on the tape (read with grad() after backward).
  Var variable(Tensor value);
  // Leaf bound to a Parameter. The value is read in place; repeated calls
  // for the same parameter return the same node.
  Var parameter(Parameter& param);
  Var record(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  const Tensor& grad(Var v) { return grad(v.id()); }

  // Seeds d(root)/d(root) = 1 for a scalar root and runs every closure.
  void backward(Var root);

  // Adds every parameter leaf's gradient into Parameter::gradient.
  void accumulate_parameter_gradients();

  // Calls fn(Parameter&, const Tensor& grad) for each parameter leaf that
  // received a gradient.
  template <class Fn>
  void for_each_parameter_gradient(Fn&& fn) {
    for (const auto& [param, id] : param_nodes_) {
      const Node& node = nodes_[id];
      if (!node.grad.empty()) fn(*param, node.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

}  // namespace ipnmt::nn
