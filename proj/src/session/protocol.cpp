#include "ipnmt/session/protocol.hpp"

#include <cmath>

#include "ipnmt/errors.hpp"

namespace ipnmt::session {

using nlohmann::json;

namespace {

json token_strings(std::span<const TokenId> ids, const model::Vocabulary& vocab) {
  json out = json::array();
  for (TokenId id : ids) out.push_back(vocab.token(id));
  return out;
}

json finite_array(std::span<const double> values) {
  json out = json::array();
  for (double v : values) out.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return out;
}

}  // namespace

json partial_json(const PartialTranslation& p, const model::Vocabulary& target, int round) {
  return {{"tokens", token_strings(p.tokens, target)},
          {"entropies", finite_array(p.entropies)},
          {"uncertain_positions", p.uncertain_positions},
          {"complete", p.complete},
          {"truncated", p.truncated},
          {"round", round}};
}

json rule_json(const FeedbackRule& r, const model::Vocabulary& target) {
  return {{"position", r.position},
          {"kind", std::string(feedback::to_string(r.kind))},
          {"token", target.token(r.token)},
          {"round", r.round_issued}};
}

json round_json(const RoundRecord& rec, const model::Vocabulary& target) {
  json rules = json::array();
  for (const auto& r : rec.rules) rules.push_back(rule_json(r, target));
  json rewards = json::array();
  for (const auto& r : rec.rewards) {
    rewards.push_back({{"value", r.value}, {"explicit", r.is_explicit}});
  }
  json out = {{"round", rec.round},
              {"partial", partial_json(rec.shown, target, rec.round)},
              {"rules", rules},
              {"rewards", rewards},
              {"updated", rec.updated},
              {"accepted", rec.accepted}};
  out["loss_before"] = rec.updated ? json(rec.loss_before) : json(nullptr);
  out["loss_after"] = rec.updated ? json(rec.loss_after) : json(nullptr);
  return out;
}

json constraints_json(const feedback::FeedbackRuleSet& rules, const model::Vocabulary& target) {
  json out = json::array();
  for (const auto& [pos, c] : rules.constraints()) {
    json entry = {{"position", pos}};
    if (c.required) {
      entry["required"] = {{"token", target.token(c.required->token)},
                           {"origin", std::string(feedback::to_string(c.required->origin))}};
    } else {
      json forbidden = json::array();
      for (TokenId t : c.forbidden) forbidden.push_back(target.token(t));
      entry["forbidden"] = forbidden;
    }
    out.push_back(entry);
  }
  return out;
}

json session_json(const Session& s, const model::Vocabulary& source,
                  const model::Vocabulary& target) {
  json history = json::array();
  for (const auto& rec : s.history()) history.push_back(round_json(rec, target));
  return {{"session_id", s.id()},
          {"status", std::string(to_string(s.status()))},
          {"round", s.round()},
          {"t_prefix", s.t_prefix()},
          {"source", token_strings(s.source(), source)},
          {"partial", partial_json(s.current(), target, s.round())},
          {"constraints", constraints_json(s.rules(), target)},
          {"history", history},
          {"version", s.version()}};
}

RuleCounts count_rules(const Session& s) {
  RuleCounts c;
  for (const auto& rec : s.history()) {
    for (const auto& r : rec.rules) {
      switch (r.kind) {
        case feedback::FeedbackKind::Keep:
          ++c.keep;
          break;
        case feedback::FeedbackKind::Delete:
          ++c.remove;
          break;
        case feedback::FeedbackKind::Substitute:
          ++c.substitute;
          break;
      }
    }
  }
  return c;
}

ProtocolLog::ProtocolLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw InputError("cannot open protocol log " + path.string());
}

void ProtocolLog::append(const json& record) {
  std::lock_guard lock(mutex_);
  out_ << record.dump() << '\n';
  out_.flush();
}

void ProtocolLog::flush() {
  std::lock_guard lock(mutex_);
  out_.flush();
}

json round_log_json(const Session& s, const RoundRecord& rec, const model::Vocabulary& target) {
  json out = round_json(rec, target);
  out["event"] = rec.accepted ? "accept" : "round";
  out["session_id"] = s.id();
  out["status"] = std::string(to_string(s.status()));
  return out;
}

}  // namespace ipnmt::session
