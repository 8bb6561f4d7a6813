#pragma once

#include <cstdint>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "ipnmt/decoding/beam_search.hpp"
#include "ipnmt/errors.hpp"
#include "ipnmt/feedback/learning.hpp"
#include "ipnmt/feedback/rules.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/rng.hpp"

namespace ipnmt::session {

using decoding::PartialTranslation;
using feedback::FeedbackRule;

enum class Status { Active, Accepted, Aborted };
std::string_view to_string(Status status);

struct RoundRecord {
  int round = 0;
  PartialTranslation shown;
  std::vector<FeedbackRule> rules;
  feedback::RewardVector rewards;
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool updated = false;
  bool accepted = false;  // the closing record written by accept()
};

struct SessionOptions {
  int round_cap = 10;
  bool update_model = true;  // false freezes θ (decoding-only rounds)
};

// One rejected rule of a feedback batch.
struct RuleDiagnostic {
  std::size_t index = 0;  // into the submitted list
  std::size_t position = 0;
  std::string message;
};

class FeedbackRejected : public RuleError {
 public:
  explicit FeedbackRejected(std::vector<RuleDiagnostic> diagnostics);
  const std::vector<RuleDiagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<RuleDiagnostic> diagnostics_;
};

// Model plus the lock that separates parameter updates (exclusive) from
// decodes (shared). The lock may be null for single-threaded use.
struct ModelAccess {
  model::Seq2Seq* network = nullptr;
  std::shared_mutex* lock = nullptr;
};

// The per-sentence interactive loop: decode until the first uncertain
// point, collect positional feedback, update θ, decode further under the
// accumulated rule set, until the translation is accepted.
class Session {
 public:
  // Decodes the first unconstrained partial. Throws InputError on an empty
  // source.
  static Session start(ModelAccess model, std::string id, TokenIds source,
                       const SessionOptions& options, std::uint64_t seed);

  // Validates the whole batch first (FeedbackRejected lists every bad rule),
  // then merges it, builds rewards, applies one update and re-decodes.
  // Throws StateError when the session is not Active. Reaching the round
  // cap applies the last update and aborts the session.
  const PartialTranslation& submit(ModelAccess model, std::span<const FeedbackRule> rules);

  // Marks the session Accepted, appends a closing record for the accepted
  // round and returns the last shown partial without EOS. Throws StateError
  // when already terminal. Afterwards history().size() == round().
  TokenIds accept();
  void abort();

  // Diagnostics for each rule that submit() would reject; empty when the
  // batch is acceptable.
  std::vector<RuleDiagnostic> validate(std::span<const FeedbackRule> rules,
                                       std::size_t vocab_size) const;

  const std::string& id() const { return id_; }
  const TokenIds& source() const { return source_; }
  std::size_t t_prefix() const { return t_prefix_; }
  int round() const { return round_; }
  Status status() const { return status_; }
  const feedback::FeedbackRuleSet& rules() const { return rules_; }
  const std::vector<RoundRecord>& history() const { return history_; }
  const PartialTranslation& current() const { return current_; }
  const SessionOptions& options() const { return options_; }
  // Bumped on every mutation.
  std::uint64_t version() const { return version_; }

 private:
  Session() = default;
  PartialTranslation decode(const model::Seq2Seq& network,
                            const feedback::FeedbackRuleSet& rules) const;

  std::string id_;
  TokenIds source_;
  SessionOptions options_;
  std::size_t t_prefix_ = 0;
  int round_ = 1;
  Status status_ = Status::Active;
  feedback::FeedbackRuleSet rules_;
  std::vector<RoundRecord> history_;
  PartialTranslation current_;
  Rng rng_;
  std::uint64_t version_ = 0;
};

}  // namespace ipnmt::session
