#include "ipnmt/feedback/learning.hpp"

#include <algorithm>
#include <cmath>

#include "ipnmt/errors.hpp"
#include "ipnmt/nn/ops.hpp"

namespace ipnmt::feedback {

RewardSettings RewardSettings::from(const model::ModelConfig& c) {
  return {c.reward_keep, c.reward_substitute, c.reward_delete, c.floor_mean, c.floor_std};
}

double reward_of(FeedbackKind kind, const RewardSettings& s) {
  switch (kind) {
    case FeedbackKind::Keep:
      return s.keep;
    case FeedbackKind::Substitute:
      return s.substitute;
    case FeedbackKind::Delete:
      return s.remove;
  }
  return 0.0;
}

double sample_floor(const RewardSettings& s, Rng& rng) {
  if (s.floor_std == 0.0) return std::max(0.0, s.floor_mean);
  return std::max(0.0, rng.normal(s.floor_mean, s.floor_std));
}

RewardVector build_rewards(const decoding::PartialTranslation& partial,
                           std::span<const FeedbackRule> new_rules,
                           const RewardSettings& settings, Rng& rng) {
  const std::size_t n = partial.tokens.size();
  RewardVector rewards(n);
  for (const FeedbackRule& r : new_rules) {
    if (r.position < 1 || r.position > n) {
      throw PreconditionError("reward for position " + std::to_string(r.position) +
                              " outside partial of length " + std::to_string(n));
    }
    rewards[r.position - 1] = {reward_of(r.kind, settings), true};
  }
  for (auto& r : rewards) {
    if (!r.is_explicit) r.value = sample_floor(settings, rng);
  }
  return rewards;
}

TokenIds demonstrated_actions(const decoding::PartialTranslation& partial,
                              std::span<const FeedbackRule> new_rules) {
  TokenIds actions = partial.tokens;
  for (const FeedbackRule& r : new_rules) {
    if (r.kind == FeedbackKind::Substitute && r.position >= 1 && r.position <= actions.size()) {
      actions[r.position - 1] = r.token;
    }
  }
  return actions;
}

double surrogate_loss(const model::Seq2Seq& network, std::span<const TokenId> source,
                      std::span<const TokenId> actions, const RewardVector& rewards) {
  const auto log_probs = network.teacher_forced_log_probs(source, actions);
  double loss = 0.0;
  for (std::size_t t = 0; t < log_probs.size(); ++t) loss -= rewards[t].value * log_probs[t];
  return loss;
}

double surrogate_gradient(model::Seq2Seq& network, std::span<const TokenId> source,
                          std::span<const TokenId> actions, const RewardVector& rewards) {
  if (actions.size() != rewards.size()) {
    throw DimensionError("surrogate: " + std::to_string(actions.size()) + " actions, " +
                         std::to_string(rewards.size()) + " rewards");
  }
  auto params = network.params().all();
  for (auto* p : params) p->zero_grad();
  if (actions.empty()) return 0.0;
  nn::Tape tape;
  const auto terms = network.log_prob_terms(tape, source, actions);
  std::vector<double> coefficients(rewards.size());
  for (std::size_t t = 0; t < rewards.size(); ++t) coefficients[t] = -rewards[t].value;
  nn::Var loss = nn::weighted_sum(terms, coefficients);
  tape.backward(loss);
  tape.accumulate_parameter_gradients();
  return loss.value()[0];
}

UpdateResult policy_gradient_update(model::Seq2Seq& network, std::span<const TokenId> source,
                                    const decoding::PartialTranslation& partial,
                                    std::span<const FeedbackRule> new_rules,
                                    const RewardVector& rewards, double alpha) {
  if (rewards.size() != partial.tokens.size()) {
    throw DimensionError("policy update: rewards not aligned with partial translation");
  }
  const TokenIds actions = demonstrated_actions(partial, new_rules);
  auto params = network.params().all();
  UpdateResult result;
  try {
    result.loss_before = surrogate_gradient(network, source, actions, rewards);
    if (!std::isfinite(result.loss_before)) throw NumericError("policy update: non-finite loss");
    for (const auto* p : params) {
      if (!p->gradient.all_finite()) {
        throw NumericError("policy update: non-finite gradient for " + p->name);
      }
    }
  } catch (const NumericError&) {
    for (auto* p : params) p->zero_grad();
    throw;
  }
  result.grad_norm = nn::global_grad_norm(params);
  for (auto* p : params) nn::adam_update(*p, alpha);
  result.loss_after = surrogate_loss(network, source, actions, rewards);
  return result;
}

}  // namespace ipnmt::feedback
