#include "ipnmt/feedback/rules.hpp"

#include "ipnmt/errors.hpp"

namespace ipnmt::feedback {

std::string_view to_string(FeedbackKind kind) {
  switch (kind) {
    case FeedbackKind::Keep:
      return "keep";
    case FeedbackKind::Delete:
      return "delete";
    case FeedbackKind::Substitute:
      return "substitute";
  }
  return "?";
}

FeedbackKind parse_kind(std::string_view text) {
  if (text == "keep") return FeedbackKind::Keep;
  if (text == "delete") return FeedbackKind::Delete;
  if (text == "substitute") return FeedbackKind::Substitute;
  throw RuleError("unknown feedback kind '" + std::string(text) + "'");
}

std::optional<std::string> FeedbackRuleSet::check(const FeedbackRule& rule) const {
  const std::string where = "position " + std::to_string(rule.position);
  if (rule.position < 1) return "positions are 1-based, got 0";
  const PositionConstraint* c = at(rule.position);
  if (!c) return std::nullopt;
  if (rule.kind == FeedbackKind::Delete) {
    if (c->required) return where + " already requires token " + std::to_string(c->required->token);
    return std::nullopt;
  }
  if (c->required && c->required->token != rule.token) {
    return where + " already requires token " + std::to_string(c->required->token);
  }
  if (c->forbidden.contains(rule.token)) {
    return where + ": token " + std::to_string(rule.token) + " was deleted there";
  }
  return std::nullopt;
}

void FeedbackRuleSet::add(const FeedbackRule& rule) {
  if (auto problem = check(rule)) throw RuleError(*problem);
  PositionConstraint& c = constraints_[rule.position];
  if (rule.kind == FeedbackKind::Delete) {
    c.forbidden.insert(rule.token);
  } else if (!c.required) {
    c.required = Required{rule.token, rule.kind};
    c.forbidden.clear();
  }
  history_.push_back(rule);
}

bool FeedbackRuleSet::allows(std::size_t position, TokenId token) const {
  const PositionConstraint* c = at(position);
  return !c || c->allows(token);
}

const PositionConstraint* FeedbackRuleSet::at(std::size_t position) const {
  auto it = constraints_.find(position);
  return it == constraints_.end() ? nullptr : &it->second;
}

std::optional<TokenId> FeedbackRuleSet::required_token(std::size_t position) const {
  const PositionConstraint* c = at(position);
  if (!c || !c->required) return std::nullopt;
  return c->required->token;
}

void FeedbackRuleSet::clear() {
  constraints_.clear();
  history_.clear();
}

}  // namespace ipnmt::feedback
