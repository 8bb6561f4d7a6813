#pragma once

#include <memory>
#include <span>

#include "ipnmt/decoding/beam_search.hpp"
#include "ipnmt/model/seq2seq.hpp"

namespace ipnmt::decoding {

// Binds a Seq2Seq to one encoded source so beam search can drive it.
class Seq2SeqStepper {
 public:
  using State = model::DecoderState;

  Seq2SeqStepper(const model::Seq2Seq& network, std::span<const TokenId> source);
  Seq2SeqStepper(const model::Seq2Seq& network, std::shared_ptr<const model::EncoderOutput> encoded);

  std::size_t vocab_size() const { return network_->config().target_vocab_size; }
  Step<State> start() const;
  Step<State> advance(const State& state, TokenId token) const;

 private:
  const model::Seq2Seq* network_;
  std::shared_ptr<const model::EncoderOutput> encoded_;
};

// Hypothesis length cap for a source: min(max_length, 2 * |x| + 10).
std::size_t length_limit(const model::ModelConfig& config, std::size_t source_length);

SearchOptions search_options(const model::ModelConfig& config, std::size_t source_length,
                             std::size_t prefix_length);

PartialTranslation constrained_search(const model::Seq2Seq& network,
                                      std::span<const TokenId> source,
                                      const SearchOptions& options,
                                      const feedback::FeedbackRuleSet& rules);

// Greedy decode without EOS in the result.
TokenIds greedy_translate(const model::Seq2Seq& network, std::span<const TokenId> source);

// Drops a trailing EOS, if present.
TokenIds strip_eos(TokenIds tokens);

}  // namespace ipnmt::decoding
