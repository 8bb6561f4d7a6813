#include "ipnmt/decoding/decoder.hpp"

#include <algorithm>

namespace ipnmt::decoding {

namespace {

Step<model::DecoderState> wrap(model::StepResult r) {
  return {std::move(r.probs), std::move(r.log_probs), std::move(r.state)};
}

}  // namespace

Seq2SeqStepper::Seq2SeqStepper(const model::Seq2Seq& network, std::span<const TokenId> source)
    : network_(&network), encoded_(network.encode(source)) {}

Seq2SeqStepper::Seq2SeqStepper(const model::Seq2Seq& network,
                               std::shared_ptr<const model::EncoderOutput> encoded)
    : network_(&network), encoded_(std::move(encoded)) {}

Step<model::DecoderState> Seq2SeqStepper::start() const {
  return wrap(network_->decoder_step(network_->initial_state(encoded_), model::Vocabulary::kBos));
}

Step<model::DecoderState> Seq2SeqStepper::advance(const State& state, TokenId token) const {
  return wrap(network_->decoder_step(state, token));
}

std::size_t length_limit(const model::ModelConfig& config, std::size_t source_length) {
  return std::min(config.max_length, 2 * source_length + 10);
}

SearchOptions search_options(const model::ModelConfig& config, std::size_t source_length,
                             std::size_t prefix_length) {
  SearchOptions o;
  o.beam_size = config.beam_size;
  o.max_length = length_limit(config, source_length);
  o.prefix_length = std::min(prefix_length, o.max_length - 1);
  o.epsilon = config.epsilon;
  o.delta = config.delta;
  return o;
}

PartialTranslation constrained_search(const model::Seq2Seq& network,
                                      std::span<const TokenId> source,
                                      const SearchOptions& options,
                                      const feedback::FeedbackRuleSet& rules) {
  return beam_search(Seq2SeqStepper(network, source), options, rules);
}

TokenIds greedy_translate(const model::Seq2Seq& network, std::span<const TokenId> source) {
  return strip_eos(greedy_decode(Seq2SeqStepper(network, source),
                                 length_limit(network.config(), source.size())));
}

TokenIds strip_eos(TokenIds tokens) {
  if (!tokens.empty() && tokens.back() == model::Vocabulary::kEos) tokens.pop_back();
  return tokens;
}

}  // namespace ipnmt::decoding
