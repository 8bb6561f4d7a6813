#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ipnmt/model/config.hpp"
#include "ipnmt/model/vocabulary.hpp"
#include "ipnmt/nn/ops.hpp"
#include "ipnmt/nn/parameter.hpp"
#include "ipnmt/nn/tape.hpp"

namespace ipnmt::model {

// All trainable tensors of the policy. Matrices are [in x out].
struct ModelParams {
  nn::Parameter source_embedding;  // [Vs x E]
  nn::Parameter target_embedding;  // [Vt x E]
  nn::Parameter encoder_weight;    // [(E + H) x 4H]
  nn::Parameter encoder_bias;      // [4H]
  nn::Parameter decoder_weight;    // [(E + H + H) x 4H], input feeding
  nn::Parameter decoder_bias;      // [4H]
  nn::Parameter attention;         // [H x H]
  nn::Parameter output_weight;     // [2H x Vt] over [h; context]
  nn::Parameter output_bias;       // [Vt]

  std::vector<nn::Parameter*> all();
  std::vector<const nn::Parameter*> all() const;
};

struct EncoderOutput {
  nn::Tensor states;  // [n x H]
  std::vector<double> final_h;
  std::vector<double> final_c;
};

struct DecoderState {
  std::vector<double> h;
  std::vector<double> c;
  std::vector<double> context;  // previous attention context (input feeding)
  std::shared_ptr<const EncoderOutput> encoder;
};

struct StepResult {
  std::vector<double> probs;      // π(· | x, y_<t), sums to 1
  std::vector<double> log_probs;  // log of the same distribution
  DecoderState state;
};

// Single-layer LSTM encoder-decoder with bilinear global attention and input
// feeding. Read-only methods never touch parameters and may run
// concurrently; anything that writes parameters needs exclusive access.
class Seq2Seq {
 public:
  // Uniform initialization in [-init_scale, init_scale] from `seed`.
  Seq2Seq(const ModelConfig& config, std::uint64_t seed);
  static Seq2Seq zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  std::shared_ptr<const EncoderOutput> encode(std::span<const TokenId> source) const;
  DecoderState initial_state(std::shared_ptr<const EncoderOutput> encoder) const;
  // Consumes prev_token and returns the distribution over the next token.
  StepResult decoder_step(const DecoderState& state, TokenId prev_token) const;

  // log π(a_t | x, a_<t) for each t under teacher forcing, BOS first.
  std::vector<double> teacher_forced_log_probs(std::span<const TokenId> source,
                                               std::span<const TokenId> actions) const;

  // Same quantities recorded on a tape (one scalar Var per action) for
  // gradient computation.
  std::vector<nn::Var> log_prob_terms(nn::Tape& tape, std::span<const TokenId> source,
                                      std::span<const TokenId> actions);

  std::size_t parameter_count() const;

 private:
  struct ZeroTag {};
  Seq2Seq(const ModelConfig& config, ZeroTag);

  void check_source(std::span<const TokenId> source) const;

  ModelConfig config_;
  ModelParams params_;
};

}  // namespace ipnmt::model
