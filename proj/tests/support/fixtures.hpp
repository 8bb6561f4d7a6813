#pragma once

#include <string>
#include <vector>

#include "ipnmt/data/pretrain.hpp"
#include "ipnmt/data/synthetic.hpp"
#include "ipnmt/model/checkpoint.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/rng.hpp"

namespace fixtures {

using ipnmt::TokenIds;

inline ipnmt::model::ModelConfig tiny_config(std::size_t source_vocab, std::size_t target_vocab,
                                             std::size_t embedding = 4, std::size_t hidden = 5) {
  ipnmt::model::ModelConfig c;
  c.source_vocab_size = source_vocab;
  c.target_vocab_size = target_vocab;
  c.embedding_dim = embedding;
  c.hidden_dim = hidden;
  return c;
}

// Wider init than the default so tiny random models have peaked,
// non-uniform distributions.
inline ipnmt::model::Seq2Seq random_model(const ipnmt::model::ModelConfig& config,
                                          std::uint64_t seed, double scale = 0.8) {
  auto c = config;
  c.init_scale = scale;
  return ipnmt::model::Seq2Seq(c, seed);
}

// Regular (non-special) ids only.
inline TokenIds random_source(ipnmt::Rng& rng, std::size_t vocab, std::size_t min_len,
                              std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  TokenIds out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(static_cast<ipnmt::TokenId>(4 + rng.below(vocab - 4)));
  return out;
}

inline ipnmt::model::Vocabulary letters_vocab(std::size_t regular, const std::string& prefix) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < regular; ++i) words.push_back(prefix + std::to_string(i));
  return ipnmt::model::Vocabulary(words);
}

// A small two-domain task and the domain-A model pretrained on it. Takes a
// few seconds.
struct ToyWorld {
  ipnmt::data::SyntheticTask task;
  ipnmt::model::ModelBundle bundle;
};

inline ipnmt::data::SyntheticTaskSpec toy_spec() {
  ipnmt::data::SyntheticTaskSpec s;
  s.source_vocab_size = 24;
  s.target_vocab_size = 24;
  s.min_length = 3;
  s.max_length = 6;
  s.perturbed_fraction = 0.2;
  s.reorder_triggers = 1;
  s.perturbed_weight_a = 0.3;
  s.perturbed_weight_b = 3.0;
  s.pretrain_size = 800;
  s.dev_a_size = 40;
  s.test_a_size = 40;
  s.adapt_size = 20;
  s.dev_b_size = 20;
  s.test_b_size = 20;
  s.seed = 5;
  return s;
}

inline ToyWorld toy_world(std::size_t epochs = 6) {
  auto task = ipnmt::data::generate_synthetic_task(toy_spec());
  auto config = tiny_config(task.source_vocab.size(), task.target_vocab.size(), 16, 24);
  config.max_length = 16;
  ipnmt::model::ModelBundle bundle{task.source_vocab, task.target_vocab,
                                   ipnmt::model::Seq2Seq(config, 3)};
  ipnmt::data::PretrainOptions options;
  options.epochs = epochs;
  options.batch_size = 16;
  options.learning_rate = 5e-3;
  ipnmt::data::pretrain(bundle.network, task.pretrain, task.dev_a, options);
  return {std::move(task), std::move(bundle)};
}

}  // namespace fixtures
