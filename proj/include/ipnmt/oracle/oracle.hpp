#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipnmt/data/corpus.hpp"
#include "ipnmt/decoding/beam_search.hpp"
#include "ipnmt/feedback/rules.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/session/session.hpp"

namespace ipnmt::oracle {

enum class Mode { KeepDelete, PlusSubstitute };
std::string_view to_string(Mode mode);
// "keep-delete" or "substitute" (also "plus-substitute"); throws ConfigError.
Mode parse_mode(std::string_view text);

struct OracleConfig {
  Mode mode = Mode::KeepDelete;
  std::size_t max_rules_per_round = 7;
  bool accept_on_complete_without_rules = true;

  void validate() const;
};

struct OracleDecision {
  std::vector<feedback::FeedbackRule> rules;
  bool accept = false;
};

// Reference-driven simulated user. Uncertain positions inside the reference
// length get keep (match) or delete/substitute (mismatch); every position
// past the reference length gets a delete. The reference is compared with an
// implicit EOS after its last token, so a correct EOS can be kept and EOS is
// never an overlength delete. Positions already carrying a Required rule are
// skipped. Candidates are taken left to right up to the cap. The user accepts
// a final partial when it produced no rules.
OracleDecision simulate_feedback(const decoding::PartialTranslation& partial,
                                 std::span<const TokenId> reference, const OracleConfig& config,
                                 const feedback::FeedbackRuleSet* existing = nullptr);

struct SentenceOutcome {
  std::size_t index = 0;
  int rounds = 0;
  std::size_t keeps = 0;
  std::size_t deletes = 0;  // within reference length
  std::size_t overlength_deletes = 0;
  std::size_t substitutes = 0;
  std::size_t target_length = 0;
  bool accepted = false;
  double mean_entropy = 0.0;  // over every shown token of every round
  TokenIds translation;

  std::size_t clicks() const { return keeps + deletes + overlength_deletes + substitutes; }
};

struct AdaptationReport {
  std::vector<SentenceOutcome> sentences;
  std::vector<double> entropy_series;  // cumulative average of mean_entropy

  double mean_rounds() const;
  double mean_clicks() const;
  double mean_keep_delete() const;
  double mean_substitutes() const;
  double mean_target_length() const;
  std::size_t accepted() const;
};

struct SimulationOptions {
  OracleConfig oracle;
  session::SessionOptions session;
  std::uint64_t seed = 1;
};

using RoundCallback =
    std::function<void(std::size_t sentence, const session::Session&, const session::RoundRecord&)>;

// One online epoch over the corpus in order. θ is updated in place and
// persists across sentences; rule sets start empty per sentence. Session
// errors are rethrown as Error naming the sentence index.
AdaptationReport run_simulated_corpus(model::Seq2Seq& network, const data::ParallelCorpus& corpus,
                                      const SimulationOptions& options,
                                      const RoundCallback& on_round = {});

void write_report_csv(const AdaptationReport& report, std::ostream& out);
void write_entropy_csv(const AdaptationReport& report, std::ostream& out);
nlohmann::json summary_json(const AdaptationReport& report);

}  // namespace ipnmt::oracle
