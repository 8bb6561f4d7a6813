#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "ipnmt/errors.hpp"
#include "ipnmt/feedback/learning.hpp"
#include "ipnmt/feedback/rules.hpp"
#include "oracles.hpp"

using namespace ipnmt;
using feedback::FeedbackKind;
using feedback::FeedbackRule;
using feedback::FeedbackRuleSet;
using model::Vocabulary;

namespace {

decoding::PartialTranslation partial_of(TokenIds tokens) {
  decoding::PartialTranslation p;
  p.tokens = std::move(tokens);
  p.entropies.assign(p.tokens.size(), 2.0);
  for (std::size_t i = 1; i <= p.tokens.size(); ++i) p.uncertain_positions.push_back(i);
  return p;
}

}  // namespace

TEST_CASE("kind names") {
  CHECK(feedback::parse_kind("keep") == FeedbackKind::Keep);
  CHECK(feedback::parse_kind("delete") == FeedbackKind::Delete);
  CHECK(feedback::parse_kind("substitute") == FeedbackKind::Substitute);
  CHECK(feedback::to_string(FeedbackKind::Substitute) == "substitute");
  CHECK_THROWS_AS(feedback::parse_kind("Keep"), RuleError);
}

TEST_CASE("rule set transitions") {
  FeedbackRuleSet s;
  s.add({2, FeedbackKind::Delete, 5, 1});
  s.add({2, FeedbackKind::Delete, 6, 1});
  CHECK_FALSE(s.allows(2, 5));
  CHECK_FALSE(s.allows(2, 6));
  CHECK(s.allows(2, 7));
  CHECK(s.allows(9, 5));

  // A substitute for a deleted token is rejected, for another it wins.
  CHECK(s.check({2, FeedbackKind::Substitute, 5, 2}).has_value());
  s.add({2, FeedbackKind::Substitute, 7, 2});
  CHECK(s.required_token(2) == 7u);
  CHECK(s.at(2)->forbidden.empty());
  CHECK(s.at(2)->required->origin == FeedbackKind::Substitute);
  CHECK_FALSE(s.allows(2, 8));

  // Required positions accept only the same token again.
  CHECK_NOTHROW(s.add({2, FeedbackKind::Keep, 7, 3}));
  CHECK(s.at(2)->required->origin == FeedbackKind::Substitute);
  CHECK_THROWS_AS(s.add({2, FeedbackKind::Keep, 8, 3}), RuleError);
  CHECK_THROWS_AS(s.add({2, FeedbackKind::Delete, 7, 3}), RuleError);
  CHECK_THROWS_AS(s.add({0, FeedbackKind::Keep, 7, 3}), RuleError);

  CHECK(s.history().size() == 4);
  s.clear();
  CHECK(s.empty());
}

TEST_CASE("reward mapping") {
  const feedback::RewardSettings r;
  CHECK(feedback::reward_of(FeedbackKind::Keep, r) == 0.5);
  CHECK(feedback::reward_of(FeedbackKind::Substitute, r) == 0.5);
  CHECK(feedback::reward_of(FeedbackKind::Delete, r) == -0.1);

  auto c = fixtures::tiny_config(8, 8);
  c.reward_delete = -0.3;
  CHECK(feedback::RewardSettings::from(c).remove == -0.3);

  Rng rng(1);
  feedback::RewardSettings degenerate;
  degenerate.floor_std = 0.0;
  for (int i = 0; i < 10; ++i) CHECK(feedback::sample_floor(degenerate, rng) == 0.1);

  // Mean 0 with spread: half the draws are clamped to 0.
  feedback::RewardSettings centered;
  centered.floor_mean = 0.0;
  std::size_t zeros = 0;
  for (int i = 0; i < 4000; ++i) {
    const double v = feedback::sample_floor(centered, rng);
    CHECK(v >= 0.0);
    zeros += v == 0.0;
  }
  CHECK(zeros > 1800);
  CHECK(zeros < 2200);
}

TEST_CASE("rewards and demonstrated actions") {
  const auto p = partial_of({5, 6, 7, Vocabulary::kEos});
  const std::vector<FeedbackRule> rules{{2, FeedbackKind::Delete, 6, 1},
                                        {3, FeedbackKind::Substitute, 9, 1}};
  Rng rng(4);
  feedback::RewardSettings s;
  s.floor_std = 0.0;
  s.floor_mean = 0.25;
  const auto rw = feedback::build_rewards(p, rules, s, rng);
  REQUIRE(rw.size() == 4);
  CHECK(rw[0] == feedback::TokenReward{0.25, false});
  CHECK(rw[1] == feedback::TokenReward{-0.1, true});
  CHECK(rw[2] == feedback::TokenReward{0.5, true});
  CHECK(rw[3] == feedback::TokenReward{0.25, false});
  CHECK(feedback::demonstrated_actions(p, rules) == TokenIds{5, 6, 9, Vocabulary::kEos});

  const std::vector<FeedbackRule> outside{{5, FeedbackKind::Keep, 1, 1}};
  CHECK_THROWS_AS(feedback::build_rewards(p, outside, s, rng), PreconditionError);

  // Floor draws happen left to right over the implicit positions only.
  Rng a(9), b(9);
  feedback::RewardSettings noisy;
  const auto r1 = feedback::build_rewards(p, rules, noisy, a);
  const double first = feedback::sample_floor(noisy, b);
  const double second = feedback::sample_floor(noisy, b);
  CHECK(r1[0].value == first);
  CHECK(r1[3].value == second);
}

TEST_CASE("surrogate loss is the reward-weighted negative log-likelihood") {
  const auto net = fixtures::random_model(fixtures::tiny_config(8, 9), 2);
  const TokenIds source{4, 5, 6};
  const TokenIds actions{7, 5, Vocabulary::kEos};
  const feedback::RewardVector rw{{0.5, true}, {-0.1, true}, {0.08, false}};
  const auto lp = net.teacher_forced_log_probs(source, actions);
  const double expect = -(0.5 * lp[0] - 0.1 * lp[1] + 0.08 * lp[2]);
  CHECK(feedback::surrogate_loss(net, source, actions, rw) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("surrogate gradient matches finite differences") {
  auto net = fixtures::random_model(fixtures::tiny_config(7, 8, 3, 4), 3, 0.5);
  const TokenIds source{4, 5, 6};
  const TokenIds actions{5, 4, 7, Vocabulary::kEos};
  const feedback::RewardVector rw{{0.5, true}, {-0.1, true}, {0.2, false}, {0.07, false}};
  const double loss = feedback::surrogate_gradient(net, source, actions, rw);
  CHECK(loss == doctest::Approx(feedback::surrogate_loss(net, source, actions, rw)).epsilon(1e-12));
  double worst = 0.0;
  for (auto* p : net.params().all()) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double fd = oracles::central_difference(
          [&] { return feedback::surrogate_loss(net, source, actions, rw); }, p->value[k], 1e-5);
      worst = std::max(worst, oracles::relative_error(fd, p->gradient[k], 1e-6));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("policy update moves probability in the rewarded direction") {
  auto net = fixtures::random_model(fixtures::tiny_config(8, 9), 5);
  const TokenIds source{4, 7};
  const auto p = partial_of({5, 6, Vocabulary::kEos});
  const std::vector<FeedbackRule> rules{{2, FeedbackKind::Substitute, 8, 1}};
  const feedback::RewardVector rw{{0.0, false}, {0.5, true}, {0.0, false}};
  const double before = net.teacher_forced_log_probs(source, TokenIds{5, 8})[1];
  const auto r = feedback::policy_gradient_update(net, source, p, rules, rw, 1e-3);
  const double after = net.teacher_forced_log_probs(source, TokenIds{5, 8})[1];
  CHECK(after > before);
  CHECK(r.loss_after < r.loss_before);
  CHECK(r.grad_norm > 0.0);
}

TEST_CASE("a failed update leaves the model untouched") {
  auto net = fixtures::random_model(fixtures::tiny_config(8, 9), 6);
  const auto snapshot = net.params().all()[0]->value;
  const auto p = partial_of({5, Vocabulary::kEos});
  const feedback::RewardVector bad{{NAN, true}, {0.1, false}};
  CHECK_THROWS_AS(feedback::policy_gradient_update(net, TokenIds{4}, p, {}, bad, 1e-3),
                  NumericError);
  CHECK(net.params().all()[0]->value == snapshot);
  const feedback::RewardVector short_rw{{0.1, false}};
  CHECK_THROWS_AS(feedback::policy_gradient_update(net, TokenIds{4}, p, {}, short_rw, 1e-3),
                  DimensionError);
}
