#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "ipnmt/model/vocabulary.hpp"
#include "ipnmt/session/session.hpp"

namespace ipnmt::session {

// Wire forms. Tokens are written as strings, positions are 1-based.
nlohmann::json partial_json(const PartialTranslation& partial, const model::Vocabulary& target,
                            int round);
nlohmann::json rule_json(const FeedbackRule& rule, const model::Vocabulary& target);
nlohmann::json round_json(const RoundRecord& record, const model::Vocabulary& target);
nlohmann::json constraints_json(const feedback::FeedbackRuleSet& rules,
                                const model::Vocabulary& target);
nlohmann::json session_json(const Session& session, const model::Vocabulary& source,
                            const model::Vocabulary& target);

struct RuleCounts {
  std::size_t keep = 0;
  std::size_t remove = 0;
  std::size_t substitute = 0;
};
RuleCounts count_rules(const Session& session);

// Append-only JSON-lines file, one object per line, flushed per write.
class ProtocolLog {
 public:
  explicit ProtocolLog(const std::filesystem::path& path);
  void append(const nlohmann::json& record);
  void flush();

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

// The log line for one round of `session`.
nlohmann::json round_log_json(const Session& session, const RoundRecord& record,
                              const model::Vocabulary& target);

}  // namespace ipnmt::session
