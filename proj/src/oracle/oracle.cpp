#include "ipnmt/oracle/oracle.hpp"

#include <cstdio>
#include <ostream>

#include "ipnmt/decoding/decoder.hpp"
#include "ipnmt/errors.hpp"

namespace ipnmt::oracle {

using feedback::FeedbackKind;
using feedback::FeedbackRule;

std::string_view to_string(Mode mode) {
  return mode == Mode::KeepDelete ? "keep-delete" : "substitute";
}

Mode parse_mode(std::string_view text) {
  if (text == "keep-delete" || text == "keep_delete") return Mode::KeepDelete;
  if (text == "substitute" || text == "plus-substitute" || text == "plus_substitute") {
    return Mode::PlusSubstitute;
  }
  throw ConfigError("unknown oracle mode '" + std::string(text) +
                    "' (expected keep-delete or substitute)");
}

void OracleConfig::validate() const {
  if (max_rules_per_round < 1) throw ConfigError("oracle: max_rules_per_round must be >= 1");
}

OracleDecision simulate_feedback(const decoding::PartialTranslation& partial,
                                 std::span<const TokenId> reference, const OracleConfig& config,
                                 const feedback::FeedbackRuleSet* existing) {
  OracleDecision out;
  const std::size_t n = partial.tokens.size();
  auto ref_at = [&](std::size_t pos) {
    return pos <= reference.size() ? reference[pos - 1] : model::Vocabulary::kEos;
  };
  std::vector<bool> uncertain(n + 1, false);
  for (auto p : partial.uncertain_positions) {
    if (p >= 1 && p <= n) uncertain[p] = true;
  }
  for (std::size_t pos = 1; pos <= n && out.rules.size() < config.max_rules_per_round; ++pos) {
    if (existing && existing->required_token(pos)) continue;
    const TokenId tok = partial.tokens[pos - 1];
    const bool eos = tok == model::Vocabulary::kEos;
    if (pos > reference.size() && !eos) {
      out.rules.push_back({pos, FeedbackKind::Delete, tok, 0});
      continue;
    }
    if (!uncertain[pos]) continue;
    const TokenId want = ref_at(pos);
    if (tok == want) {
      out.rules.push_back({pos, FeedbackKind::Keep, tok, 0});
    } else if (config.mode == Mode::PlusSubstitute) {
      out.rules.push_back({pos, FeedbackKind::Substitute, want, 0});
    } else {
      out.rules.push_back({pos, FeedbackKind::Delete, tok, 0});
    }
  }
  out.accept = config.accept_on_complete_without_rules && partial.final() && out.rules.empty();
  return out;
}

double AdaptationReport::mean_rounds() const {
  if (sentences.empty()) return 0.0;
  double s = 0;
  for (const auto& o : sentences) s += o.rounds;
  return s / static_cast<double>(sentences.size());
}

double AdaptationReport::mean_clicks() const {
  if (sentences.empty()) return 0.0;
  double s = 0;
  for (const auto& o : sentences) s += static_cast<double>(o.clicks());
  return s / static_cast<double>(sentences.size());
}

double AdaptationReport::mean_keep_delete() const {
  if (sentences.empty()) return 0.0;
  double s = 0;
  for (const auto& o : sentences) {
    s += static_cast<double>(o.keeps + o.deletes + o.overlength_deletes);
  }
  return s / static_cast<double>(sentences.size());
}

double AdaptationReport::mean_substitutes() const {
  if (sentences.empty()) return 0.0;
  double s = 0;
  for (const auto& o : sentences) s += static_cast<double>(o.substitutes);
  return s / static_cast<double>(sentences.size());
}

double AdaptationReport::mean_target_length() const {
  if (sentences.empty()) return 0.0;
  double s = 0;
  for (const auto& o : sentences) s += static_cast<double>(o.target_length);
  return s / static_cast<double>(sentences.size());
}

std::size_t AdaptationReport::accepted() const {
  std::size_t n = 0;
  for (const auto& o : sentences) n += o.accepted;
  return n;
}

AdaptationReport run_simulated_corpus(model::Seq2Seq& network, const data::ParallelCorpus& corpus,
                                      const SimulationOptions& options,
                                      const RoundCallback& on_round) {
  options.oracle.validate();
  AdaptationReport report;
  const session::ModelAccess access{&network, nullptr};
  double entropy_total = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& pair = corpus.pairs[i];
    SentenceOutcome outcome;
    outcome.index = i;
    outcome.target_length = pair.target.size();
    double entropy_sum = 0.0;
    std::size_t entropy_count = 0;
    try {
      auto s = session::Session::start(access, "sim-" + std::to_string(i), pair.source,
                                       options.session, options.seed * 1000003ULL + i);
      while (s.status() == session::Status::Active) {
        const auto& shown = s.current();
        for (double h : shown.entropies) entropy_sum += h;
        entropy_count += shown.entropies.size();
        const auto decision = simulate_feedback(shown, pair.target, options.oracle, &s.rules());
        if (decision.accept) {
          outcome.translation = s.accept();
          outcome.accepted = true;
          break;
        }
        for (const auto& r : decision.rules) {
          switch (r.kind) {
            case FeedbackKind::Keep:
              ++outcome.keeps;
              break;
            case FeedbackKind::Substitute:
              ++outcome.substitutes;
              break;
            case FeedbackKind::Delete:
              if (r.position > pair.target.size()) ++outcome.overlength_deletes;
              else ++outcome.deletes;
              break;
          }
        }
        s.submit(access, decision.rules);
        if (on_round) on_round(i, s, s.history().back());
      }
      if (!outcome.accepted) outcome.translation = decoding::strip_eos(s.current().tokens);
      outcome.rounds = s.round();
    } catch (const Error& e) {
      throw Error("simulation failed at sentence " + std::to_string(i) + ": " + e.what());
    }
    outcome.mean_entropy =
        entropy_count ? entropy_sum / static_cast<double>(entropy_count) : 0.0;
    entropy_total += outcome.mean_entropy;
    report.entropy_series.push_back(entropy_total / static_cast<double>(i + 1));
    report.sentences.push_back(std::move(outcome));
  }
  return report;
}

void write_report_csv(const AdaptationReport& report, std::ostream& out) {
  out << "sentence,rounds,keep,delete,overlength_delete,keep_delete,substitute,clicks,"
         "target_length,accepted,mean_entropy\n";
  char buf[256];
  for (const auto& o : report.sentences) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%zu,%zu,%zu,%zu,%zu,%zu,%zu,%d,%.6f\n", o.index,
                  o.rounds, o.keeps, o.deletes, o.overlength_deletes,
                  o.keeps + o.deletes + o.overlength_deletes, o.substitutes, o.clicks(),
                  o.target_length, o.accepted ? 1 : 0, o.mean_entropy);
    out << buf;
  }
}

void write_entropy_csv(const AdaptationReport& report, std::ostream& out) {
  out << "sentence,mean_entropy,cumulative_mean_entropy\n";
  char buf[128];
  for (std::size_t i = 0; i < report.sentences.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.8f,%.8f\n", i, report.sentences[i].mean_entropy,
                  report.entropy_series[i]);
    out << buf;
  }
}

nlohmann::json summary_json(const AdaptationReport& report) {
  std::size_t keeps = 0, deletes = 0, over = 0, subs = 0;
  for (const auto& o : report.sentences) {
    keeps += o.keeps;
    deletes += o.deletes;
    over += o.overlength_deletes;
    subs += o.substitutes;
  }
  return {{"sentences", report.sentences.size()},
          {"accepted", report.accepted()},
          {"mean_rounds", report.mean_rounds()},
          {"mean_keep_delete", report.mean_keep_delete()},
          {"mean_substitute", report.mean_substitutes()},
          {"mean_clicks", report.mean_clicks()},
          {"mean_target_length", report.mean_target_length()},
          {"totals",
           {{"keep", keeps}, {"delete", deletes}, {"overlength_delete", over},
            {"substitute", subs}}}};
}

}  // namespace ipnmt::oracle
