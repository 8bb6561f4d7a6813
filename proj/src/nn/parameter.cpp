#include "ipnmt/nn/parameter.hpp"

#include <cmath>

#include "ipnmt/errors.hpp"

namespace ipnmt::nn {

Parameter::Parameter(std::string param_name, Tensor initial)
    : name(std::move(param_name)),
      value(std::move(initial)),
      gradient(Tensor::zeros_like(value)),
      adam_m(Tensor::zeros_like(value)),
      adam_v(Tensor::zeros_like(value)) {}

void Parameter::reset_optimizer() {
  adam_m.fill(0.0);
  adam_v.fill(0.0);
  step_count = 0;
}

void adam_update(Parameter& param, double learning_rate, const AdamConfig& config) {
  if (!param.gradient.all_finite()) {
    throw NumericError("non-finite gradient for parameter '" + param.name + "'");
  }
  const std::int64_t step = param.step_count + 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  auto value = param.value.values();
  auto grad = param.gradient.values();
  auto m = param.adam_m.values();
  auto v = param.adam_v.values();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    grad[i] = 0.0;
  }
  param.step_count = step;
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->gradient.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->gradient.values()) g *= scale;
    }
  }
  return norm;
}

}  // namespace ipnmt::nn
