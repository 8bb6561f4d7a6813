#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ipnmt/nn/tensor.hpp"

namespace ipnmt::nn {

// A trainable tensor together with its gradient accumulator and Adam state.
// gradient, adam_m and adam_v always have the shape of value.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor initial);

  std::string name;
  Tensor value;
  Tensor gradient;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;

  void zero_grad() { gradient.fill(0.0); }
  void reset_optimizer();
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam step that descends along `gradient`, then clears
// the gradient. A non-finite gradient throws NumericError and leaves the
// parameter untouched.
void adam_update(Parameter& param, double learning_rate,
                 const AdamConfig& config = {});

// Rescales all gradients so that their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

double global_grad_norm(std::span<Parameter* const> params);

}  // namespace ipnmt::nn
