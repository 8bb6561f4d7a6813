#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ipnmt/model/vocabulary.hpp"

namespace ipnmt::feedback {

enum class FeedbackKind { Keep, Delete, Substitute };

std::string_view to_string(FeedbackKind kind);
// Accepts "keep", "delete", "substitute"; throws RuleError otherwise.
FeedbackKind parse_kind(std::string_view text);

// One positional edit. For Keep and Delete `token` is the token shown at
// `position`; for Substitute it is the replacement.
struct FeedbackRule {
  std::size_t position = 0;  // 1-based
  FeedbackKind kind = FeedbackKind::Keep;
  TokenId token = 0;
  int round_issued = 0;

  bool operator==(const FeedbackRule&) const = default;
};

struct Required {
  TokenId token;
  FeedbackKind origin;  // Keep or Substitute
  bool operator==(const Required&) const = default;
};

// What decoding must respect at one target position: either a required
// token or a set of forbidden tokens, never both.
struct PositionConstraint {
  std::optional<Required> required;
  std::set<TokenId> forbidden;

  bool allows(TokenId token) const {
    if (required) return token == required->token;
    return !forbidden.contains(token);
  }
  bool operator==(const PositionConstraint&) const = default;
};

// The accumulated constraint set of one sentence.
//
// Legal transitions at a position:
//   keep/substitute t  -> Required(t); drops earlier forbidden tokens unless
//                         t itself was forbidden (rejected)
//   delete t           -> t added to the forbidden set; rejected once the
//                         position is Required
// Re-issuing the same Required token is accepted and changes nothing.
class FeedbackRuleSet {
 public:
  // Returns a diagnostic when `rule` cannot be merged, nullopt when it can.
  std::optional<std::string> check(const FeedbackRule& rule) const;
  // Merges the rule or throws RuleError with the diagnostic of check().
  void add(const FeedbackRule& rule);

  bool allows(std::size_t position, TokenId token) const;
  const PositionConstraint* at(std::size_t position) const;
  std::optional<TokenId> required_token(std::size_t position) const;

  const std::map<std::size_t, PositionConstraint>& constraints() const { return constraints_; }
  const std::vector<FeedbackRule>& history() const { return history_; }
  bool empty() const { return constraints_.empty(); }
  void clear();

 private:
  std::map<std::size_t, PositionConstraint> constraints_;
  std::vector<FeedbackRule> history_;
};

}  // namespace ipnmt::feedback
