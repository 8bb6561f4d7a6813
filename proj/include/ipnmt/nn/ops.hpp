#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ipnmt/nn/tape.hpp"
#include "ipnmt/nn/tensor.hpp"

namespace ipnmt::nn {

// Plain forward math shared by the tape ops and by tape-free inference, so
// both paths produce bit-identical values.
namespace fn {

// y = x W + b for a single row x.
void affine(std::span<const double> x, const Tensor& weight,
            std::span<const double> bias, std::span<double> y);
void softmax(std::span<const double> logits, std::span<double> out);
double log_sum_exp(std::span<const double> logits);
double sigmoid(double x);

// Gate pre-activations z = [i f g o] (each hidden wide) and previous cell.
// Writes the activated gates back into `gates` and tanh(c_next) into
// `tanh_c`.
void lstm_cell(std::span<const double> z, std::span<const double> c,
               std::span<double> gates, std::span<double> h_next,
               std::span<double> c_next, std::span<double> tanh_c);

// Bilinear global attention. states is [n x d_s]; weight is [d_q x d_s].
// projected = query^T W; score_j = projected . state_j.
void attention(std::span<const double> query, const Tensor& states,
               const Tensor& weight, std::span<double> projected,
               std::span<double> weights, std::span<double> context);

}  // namespace fn

// --- differentiable ops ---------------------------------------------------

// input [in] or [m x in]; weight [in x out]; bias [out].
Var affine(Var input, Var weight, Var bias);
Var softmax(Var logits);
Var log_softmax(Var logits);
// log softmax(logits)[index], as a scalar.
Var log_softmax_pick(Var logits, std::size_t index);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
// Rows of vectors stacked into a matrix [n x d].
Var stack_rows(std::span<const Var> rows);
// Row `index` of a matrix, as a vector.
Var row(Var matrix, std::size_t index);
Var sum(Var a);
// Σ_i coefficients[i] * scalars[i], as a scalar.
Var weighted_sum(std::span<const Var> scalars, std::span<const double> coefficients);

struct LstmWeights {
  Var weight;  // [(input + hidden) x 4*hidden], gate order i, f, g, o
  Var bias;    // [4*hidden]
};

struct LstmOutput {
  Var h;
  Var c;
};

// Standard LSTM recurrence:
//   i, f, o = σ(·), g = tanh(·) over [x; h] W + b
//   c' = f ⊙ c + i ⊙ g,  h' = o ⊙ tanh(c')
LstmOutput lstm_step(Var x, Var h, Var c, const LstmWeights& weights);

struct AttentionOutput {
  Var context;
  Var weights;
};

// states [n x d_s] (n >= 1), weight [d_q x d_s].
AttentionOutput global_attention(Var query, Var states, Var weight);

}  // namespace ipnmt::nn
