#include "ipnmt/model/config.hpp"

#include <cmath>

#include "ipnmt/errors.hpp"

namespace ipnmt::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (embedding_dim < 1) fail("embedding_dim must be >= 1");
  if (hidden_dim < 1) fail("hidden_dim must be >= 1");
  // Specials occupy ids 0..3; a vocabulary needs at least one regular token.
  if (source_vocab_size < 5) fail("source_vocab_size must be >= 5");
  if (target_vocab_size < 5) fail("target_vocab_size must be >= 5");
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
  if (!(delta > 0.0)) fail("delta must be > 0");
  if (max_length < 1) fail("max_length must be >= 1");
  if (beam_size < 1) fail("beam_size must be >= 1");
  if (!(floor_std >= 0.0)) fail("floor_std must be >= 0");
  if (!std::isfinite(interactive_lr) || interactive_lr < 0.0) fail("interactive_lr must be finite and >= 0");
}

// epsilon may be +inf (uncertainty disabled); JSON has no infinity, so it
// travels as null.
void to_json(nlohmann::json& j, const ModelConfig& c) {
  auto finite_or_null = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  j = nlohmann::json{
      {"embedding_dim", c.embedding_dim},
      {"hidden_dim", c.hidden_dim},
      {"source_vocab_size", c.source_vocab_size},
      {"target_vocab_size", c.target_vocab_size},
      {"epsilon", finite_or_null(c.epsilon)},
      {"delta", finite_or_null(c.delta)},
      {"beam_size", c.beam_size},
      {"max_length", c.max_length},
      {"interactive_lr", c.interactive_lr},
      {"reward_keep", c.reward_keep},
      {"reward_substitute", c.reward_substitute},
      {"reward_delete", c.reward_delete},
      {"floor_mean", c.floor_mean},
      {"floor_std", c.floor_std},
      {"init_scale", c.init_scale},
      {"clip_norm", c.clip_norm},
      {"rng_seed", c.rng_seed},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto number_or_inf = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    out = j.at(key).is_null() ? INFINITY : j.at(key).get<double>();
  };
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) j.at(key).get_to(out);
  };
  get("embedding_dim", c.embedding_dim);
  get("hidden_dim", c.hidden_dim);
  get("source_vocab_size", c.source_vocab_size);
  get("target_vocab_size", c.target_vocab_size);
  number_or_inf("epsilon", c.epsilon);
  number_or_inf("delta", c.delta);
  get("beam_size", c.beam_size);
  get("max_length", c.max_length);
  get("interactive_lr", c.interactive_lr);
  get("reward_keep", c.reward_keep);
  get("reward_substitute", c.reward_substitute);
  get("reward_delete", c.reward_delete);
  get("floor_mean", c.floor_mean);
  get("floor_std", c.floor_std);
  get("init_scale", c.init_scale);
  get("clip_norm", c.clip_norm);
  get("rng_seed", c.rng_seed);
}

}  // namespace ipnmt::model
