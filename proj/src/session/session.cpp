#include "ipnmt/session/session.hpp"

#include <mutex>
#include <set>

#include "ipnmt/decoding/decoder.hpp"

namespace ipnmt::session {

namespace {

std::string join_diagnostics(const std::vector<RuleDiagnostic>& diagnostics) {
  std::string msg = "feedback rejected:";
  for (const auto& d : diagnostics) {
    msg += " [rule " + std::to_string(d.index) + ", position " + std::to_string(d.position) +
           "] " + d.message + ";";
  }
  if (!diagnostics.empty()) msg.pop_back();
  return msg;
}

}  // namespace

std::string_view to_string(Status status) {
  switch (status) {
    case Status::Active:
      return "active";
    case Status::Accepted:
      return "accepted";
    case Status::Aborted:
      return "aborted";
  }
  return "?";
}

FeedbackRejected::FeedbackRejected(std::vector<RuleDiagnostic> diagnostics)
    : RuleError(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

Session Session::start(ModelAccess model, std::string id, TokenIds source,
                       const SessionOptions& options, std::uint64_t seed) {
  if (source.empty()) throw InputError("session: empty source");
  if (options.round_cap < 1) throw ConfigError("session: round_cap must be >= 1");
  Session s;
  s.id_ = std::move(id);
  s.source_ = std::move(source);
  s.options_ = options;
  s.rng_ = Rng(seed);
  {
    std::shared_lock<std::shared_mutex> guard;
    if (model.lock) guard = std::shared_lock(*model.lock);
    s.current_ = s.decode(*model.network, s.rules_);
  }
  s.t_prefix_ = s.current_.tokens.size();
  return s;
}

PartialTranslation Session::decode(const model::Seq2Seq& network,
                                   const feedback::FeedbackRuleSet& rules) const {
  const auto options =
      decoding::search_options(network.config(), source_.size(), current_.tokens.size());
  return decoding::constrained_search(network, source_, options, rules);
}

std::vector<RuleDiagnostic> Session::validate(std::span<const FeedbackRule> rules,
                                              std::size_t vocab_size) const {
  std::vector<RuleDiagnostic> out;
  const std::size_t n = current_.tokens.size();
  const std::set<std::size_t> uncertain(current_.uncertain_positions.begin(),
                                        current_.uncertain_positions.end());
  std::set<std::size_t> seen;
  feedback::FeedbackRuleSet merged = rules_;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const FeedbackRule& r = rules[i];
    auto fail = [&](std::string msg) { out.push_back({i, r.position, std::move(msg)}); };
    if (r.position < 1 || r.position > n) {
      fail("position outside the shown partial of length " + std::to_string(n));
      continue;
    }
    if (!seen.insert(r.position).second) {
      fail("more than one rule for this position");
      continue;
    }
    const TokenId shown = current_.tokens[r.position - 1];
    if (r.kind == feedback::FeedbackKind::Substitute) {
      if (r.token >= vocab_size || r.token == model::Vocabulary::kPad ||
          r.token == model::Vocabulary::kBos) {
        fail("substitute token is not a valid target token");
        continue;
      }
      if (r.token == shown) {
        fail("substitute token equals the shown token");
        continue;
      }
    } else if (r.token != shown) {
      fail(std::string(feedback::to_string(r.kind)) + " must name the shown token");
      continue;
    }
    if (r.kind != feedback::FeedbackKind::Delete && !uncertain.contains(r.position)) {
      fail("position is not uncertain; uncertain positions are " + [&] {
        std::string list = "[";
        for (auto p : current_.uncertain_positions) list += std::to_string(p) + ",";
        if (list.size() > 1) list.pop_back();
        return list + "]";
      }());
      continue;
    }
    if (auto problem = merged.check(r)) {
      fail(*problem);
      continue;
    }
    merged.add(r);
  }
  return out;
}

const PartialTranslation& Session::submit(ModelAccess model, std::span<const FeedbackRule> rules) {
  if (status_ != Status::Active) {
    throw StateError("session " + id_ + " is " + std::string(to_string(status_)));
  }
  model::Seq2Seq& network = *model.network;
  if (auto problems = validate(rules, network.config().target_vocab_size); !problems.empty()) {
    throw FeedbackRejected(std::move(problems));
  }

  RoundRecord record;
  record.round = round_;
  record.shown = current_;
  record.rules.assign(rules.begin(), rules.end());
  for (auto& r : record.rules) r.round_issued = round_;

  feedback::FeedbackRuleSet merged = rules_;
  for (const auto& r : record.rules) merged.add(r);

  const auto settings = feedback::RewardSettings::from(network.config());
  record.rewards = feedback::build_rewards(current_, record.rules, settings, rng_);
  if (options_.update_model && !current_.tokens.empty()) {
    std::unique_lock<std::shared_mutex> guard;
    if (model.lock) guard = std::unique_lock(*model.lock);
    const auto result = feedback::policy_gradient_update(
        network, source_, current_, record.rules, record.rewards, network.config().interactive_lr);
    record.loss_before = result.loss_before;
    record.loss_after = result.loss_after;
    record.updated = true;
  }

  if (round_ >= options_.round_cap) {
    rules_ = std::move(merged);
    history_.push_back(std::move(record));
    status_ = Status::Aborted;
    ++version_;
    return current_;
  }

  PartialTranslation next;
  {
    std::shared_lock<std::shared_mutex> guard;
    if (model.lock) guard = std::shared_lock(*model.lock);
    next = decode(network, merged);
  }
  rules_ = std::move(merged);
  history_.push_back(std::move(record));
  current_ = std::move(next);
  t_prefix_ = current_.tokens.size();
  ++round_;
  ++version_;
  return current_;
}

TokenIds Session::accept() {
  if (status_ != Status::Active) {
    throw StateError("session " + id_ + " is " + std::string(to_string(status_)));
  }
  RoundRecord closing;
  closing.round = round_;
  closing.shown = current_;
  closing.accepted = true;
  history_.push_back(std::move(closing));
  status_ = Status::Accepted;
  ++version_;
  return decoding::strip_eos(current_.tokens);
}

void Session::abort() {
  if (status_ != Status::Active) {
    throw StateError("session " + id_ + " is " + std::string(to_string(status_)));
  }
  status_ = Status::Aborted;
  ++version_;
}

}  // namespace ipnmt::session
