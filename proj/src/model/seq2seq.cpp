#include "ipnmt/model/seq2seq.hpp"

#include <algorithm>

#include "ipnmt/errors.hpp"
#include "ipnmt/rng.hpp"

namespace ipnmt::model {

namespace {

nn::Tensor uniform_tensor(nn::Shape shape, double scale, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

ModelParams make_params(const ModelConfig& c, double scale, Rng* rng) {
  const std::size_t e = c.embedding_dim, h = c.hidden_dim;
  auto make = [&](const char* name, nn::Shape shape) {
    return nn::Parameter(name, rng ? uniform_tensor(std::move(shape), scale, *rng)
                                   : nn::Tensor(std::move(shape)));
  };
  return ModelParams{
      make("source_embedding", {c.source_vocab_size, e}),
      make("target_embedding", {c.target_vocab_size, e}),
      make("encoder_weight", {e + h, 4 * h}),
      make("encoder_bias", {4 * h}),
      make("decoder_weight", {e + 2 * h, 4 * h}),
      make("decoder_bias", {4 * h}),
      make("attention", {h, h}),
      make("output_weight", {2 * h, c.target_vocab_size}),
      make("output_bias", {c.target_vocab_size}),
  };
}

struct LstmScratch {
  std::vector<double> input;
  std::vector<double> z;
  std::vector<double> gates;
  std::vector<double> tanh_c;
};

// One tape-free LSTM step; `input` already holds [x; h].
void lstm_forward(LstmScratch& s, const nn::Parameter& weight, const nn::Parameter& bias,
                  std::span<const double> c, std::span<double> h_out, std::span<double> c_out) {
  s.z.resize(bias.value.size());
  s.gates.resize(bias.value.size());
  s.tanh_c.resize(c.size());
  nn::fn::affine(s.input, weight.value, bias.value.values(), s.z);
  nn::fn::lstm_cell(s.z, c, s.gates, h_out, c_out, s.tanh_c);
}

}  // namespace

std::vector<nn::Parameter*> ModelParams::all() {
  return {&source_embedding, &target_embedding, &encoder_weight, &encoder_bias,
          &decoder_weight,   &decoder_bias,     &attention,      &output_weight,
          &output_bias};
}

std::vector<const nn::Parameter*> ModelParams::all() const {
  return {&source_embedding, &target_embedding, &encoder_weight, &encoder_bias,
          &decoder_weight,   &decoder_bias,     &attention,      &output_weight,
          &output_bias};
}

Seq2Seq::Seq2Seq(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  params_ = make_params(config_, config_.init_scale, &rng);
}

Seq2Seq::Seq2Seq(const ModelConfig& config, ZeroTag) : config_(config) {
  config_.validate();
  params_ = make_params(config_, 0.0, nullptr);
}

Seq2Seq Seq2Seq::zeros(const ModelConfig& config) { return Seq2Seq(config, ZeroTag{}); }

std::size_t Seq2Seq::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params_.all()) n += p->value.size();
  return n;
}

void Seq2Seq::check_source(std::span<const TokenId> source) const {
  if (source.empty()) throw InputError("encode: empty source");
  if (source.size() > config_.max_length) {
    throw InputError("encode: source length " + std::to_string(source.size()) +
                     " exceeds max_length " + std::to_string(config_.max_length));
  }
  check_ids(source, config_.source_vocab_size, "encode");
}

std::shared_ptr<const EncoderOutput> Seq2Seq::encode(std::span<const TokenId> source) const {
  check_source(source);
  const std::size_t e = config_.embedding_dim, hd = config_.hidden_dim;
  auto out = std::make_shared<EncoderOutput>();
  out->states = nn::Tensor({source.size(), hd});
  std::vector<double> h(hd, 0.0), c(hd, 0.0), h_next(hd), c_next(hd);
  LstmScratch scratch;
  scratch.input.resize(e + hd);
  for (std::size_t j = 0; j < source.size(); ++j) {
    const auto emb = params_.source_embedding.value.row(source[j]);
    std::copy(emb.begin(), emb.end(), scratch.input.begin());
    std::copy(h.begin(), h.end(), scratch.input.begin() + static_cast<std::ptrdiff_t>(e));
    lstm_forward(scratch, params_.encoder_weight, params_.encoder_bias, c, h_next, c_next);
    h.swap(h_next);
    c.swap(c_next);
    std::copy(h.begin(), h.end(), out->states.row(j).begin());
  }
  out->final_h = std::move(h);
  out->final_c = std::move(c);
  return out;
}

DecoderState Seq2Seq::initial_state(std::shared_ptr<const EncoderOutput> encoder) const {
  if (!encoder) throw PreconditionError("initial_state: no encoder output");
  DecoderState s;
  s.h = encoder->final_h;
  s.c = encoder->final_c;
  s.context.assign(config_.hidden_dim, 0.0);
  s.encoder = std::move(encoder);
  return s;
}

StepResult Seq2Seq::decoder_step(const DecoderState& state, TokenId prev_token) const {
  if (prev_token >= config_.target_vocab_size) {
    throw VocabularyError("decoder_step: token id " + std::to_string(prev_token) +
                          " outside target vocabulary of size " +
                          std::to_string(config_.target_vocab_size));
  }
  if (!state.encoder || state.h.size() != config_.hidden_dim) {
    throw PreconditionError("decoder_step: invalid decoder state");
  }
  const std::size_t e = config_.embedding_dim, hd = config_.hidden_dim;
  StepResult r;
  r.state.h.resize(hd);
  r.state.c.resize(hd);
  r.state.context.resize(hd);
  r.state.encoder = state.encoder;

  LstmScratch scratch;
  scratch.input.resize(e + 2 * hd);
  const auto emb = params_.target_embedding.value.row(prev_token);
  auto it = std::copy(emb.begin(), emb.end(), scratch.input.begin());
  it = std::copy(state.context.begin(), state.context.end(), it);
  std::copy(state.h.begin(), state.h.end(), it);
  lstm_forward(scratch, params_.decoder_weight, params_.decoder_bias, state.c, r.state.h,
               r.state.c);

  std::vector<double> projected(hd), weights(state.encoder->states.rows());
  nn::fn::attention(r.state.h, state.encoder->states, params_.attention.value, projected,
                    weights, r.state.context);

  std::vector<double> features(2 * hd);
  std::copy(r.state.context.begin(), r.state.context.end(),
            std::copy(r.state.h.begin(), r.state.h.end(), features.begin()));
  std::vector<double> logits(config_.target_vocab_size);
  nn::fn::affine(features, params_.output_weight.value, params_.output_bias.value.values(),
                 logits);
  nn::require_finite(logits, "decoder_step");
  const double lse = nn::fn::log_sum_exp(logits);
  r.log_probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) r.log_probs[i] = logits[i] - lse;
  r.probs.resize(logits.size());
  nn::fn::softmax(logits, r.probs);
  return r;
}

std::vector<double> Seq2Seq::teacher_forced_log_probs(std::span<const TokenId> source,
                                                      std::span<const TokenId> actions) const {
  check_ids(actions, config_.target_vocab_size, "teacher_forced_log_probs");
  DecoderState state = initial_state(encode(source));
  std::vector<double> out;
  out.reserve(actions.size());
  TokenId prev = Vocabulary::kBos;
  for (TokenId a : actions) {
    StepResult step = decoder_step(state, prev);
    out.push_back(step.log_probs[a]);
    state = std::move(step.state);
    prev = a;
  }
  return out;
}

std::vector<nn::Var> Seq2Seq::log_prob_terms(nn::Tape& tape, std::span<const TokenId> source,
                                             std::span<const TokenId> actions) {
  check_source(source);
  check_ids(actions, config_.target_vocab_size, "log_prob_terms");
  const std::size_t hd = config_.hidden_dim;
  nn::Var src_emb = tape.parameter(params_.source_embedding);
  nn::Var tgt_emb = tape.parameter(params_.target_embedding);
  const nn::LstmWeights enc{tape.parameter(params_.encoder_weight),
                            tape.parameter(params_.encoder_bias)};
  const nn::LstmWeights dec{tape.parameter(params_.decoder_weight),
                            tape.parameter(params_.decoder_bias)};
  nn::Var attn = tape.parameter(params_.attention);
  nn::Var out_w = tape.parameter(params_.output_weight);
  nn::Var out_b = tape.parameter(params_.output_bias);

  nn::Var h = tape.constant(nn::Tensor({hd}));
  nn::Var c = tape.constant(nn::Tensor({hd}));
  std::vector<nn::Var> encoder_states;
  encoder_states.reserve(source.size());
  for (TokenId tok : source) {
    auto step = nn::lstm_step(nn::row(src_emb, tok), h, c, enc);
    h = step.h;
    c = step.c;
    encoder_states.push_back(h);
  }
  nn::Var states = nn::stack_rows(encoder_states);

  nn::Var context = tape.constant(nn::Tensor({hd}));
  std::vector<nn::Var> terms;
  terms.reserve(actions.size());
  TokenId prev = Vocabulary::kBos;
  for (TokenId a : actions) {
    const nn::Var input_parts[] = {nn::row(tgt_emb, prev), context};
    auto step = nn::lstm_step(nn::concat(input_parts), h, c, dec);
    h = step.h;
    c = step.c;
    context = nn::global_attention(h, states, attn).context;
    const nn::Var feature_parts[] = {h, context};
    nn::Var logits = nn::affine(nn::concat(feature_parts), out_w, out_b);
    terms.push_back(nn::log_softmax_pick(logits, a));
    prev = a;
  }
  return terms;
}

}  // namespace ipnmt::model
