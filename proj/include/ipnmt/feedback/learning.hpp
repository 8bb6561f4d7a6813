#pragma once

#include <span>
#include <vector>

#include "ipnmt/decoding/beam_search.hpp"
#include "ipnmt/feedback/rules.hpp"
#include "ipnmt/model/config.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/rng.hpp"

namespace ipnmt::feedback {

struct RewardSettings {
  double keep = 0.5;
  double substitute = 0.5;
  double remove = -0.1;
  double floor_mean = 0.1;
  double floor_std = 0.05;

  static RewardSettings from(const model::ModelConfig& config);
};

// Instantaneous reward of an explicit edit.
double reward_of(FeedbackKind kind, const RewardSettings& settings = {});

// Non-negative floor reward for a token without explicit feedback:
// max(0, N(floor_mean, floor_std)).
double sample_floor(const RewardSettings& settings, Rng& rng);

struct TokenReward {
  double value = 0.0;
  bool is_explicit = false;
  bool operator==(const TokenReward&) const = default;
};
using RewardVector = std::vector<TokenReward>;

// One reward per position of `partial`. Positions named by `new_rules`
// (this round's rules only) get reward_of(kind); every other position draws
// from the floor, left to right.
RewardVector build_rewards(const decoding::PartialTranslation& partial,
                           std::span<const FeedbackRule> new_rules,
                           const RewardSettings& settings, Rng& rng);

// The action sequence the update scores: the shown tokens with substitute
// positions replaced by the demonstrated token.
TokenIds demonstrated_actions(const decoding::PartialTranslation& partial,
                              std::span<const FeedbackRule> new_rules);

// -Σ_t R_t log π(a_t | x, a_<t), evaluated without a tape.
double surrogate_loss(const model::Seq2Seq& network, std::span<const TokenId> source,
                      std::span<const TokenId> actions, const RewardVector& rewards);

struct UpdateResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
  double grad_norm = 0.0;
};

// One Adam step (learning rate alpha) ascending Σ_t R_t log π(a_t | x, a_<t)
// over the demonstrated actions. Caller must hold exclusive access to the
// network. On a non-finite loss or gradient nothing is changed and
// NumericError is thrown.
UpdateResult policy_gradient_update(model::Seq2Seq& network, std::span<const TokenId> source,
                                    const decoding::PartialTranslation& partial,
                                    std::span<const FeedbackRule> new_rules,
                                    const RewardVector& rewards, double alpha);

// Gradient of the surrogate loss written into Parameter::gradient (zeroed
// first). Returns the loss. Exposed for gradient checking.
double surrogate_gradient(model::Seq2Seq& network, std::span<const TokenId> source,
                          std::span<const TokenId> actions, const RewardVector& rewards);

}  // namespace ipnmt::feedback
