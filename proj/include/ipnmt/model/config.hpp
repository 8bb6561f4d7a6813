#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace ipnmt::model {

// Architecture, uncertainty thresholds, decoding and interactive-learning
// settings. Defaults are desk scale; the reference full-scale setup used
// 500-wide embeddings/states and 50k-word vocabularies.
struct ModelConfig {
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;

  double epsilon = 1.0;   // token entropy threshold
  double delta = 0.5;     // relative entropy jump threshold
  std::size_t beam_size = 5;
  std::size_t max_length = 40;

  double interactive_lr = 5e-4;
  double reward_keep = 0.5;
  double reward_substitute = 0.5;
  double reward_delete = -0.1;
  double floor_mean = 0.1;
  double floor_std = 0.05;

  double init_scale = 0.08;
  double clip_norm = 5.0;
  std::uint64_t rng_seed = 1;

  // Throws ConfigError on the first violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace ipnmt::model
