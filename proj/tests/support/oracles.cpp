#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracles {

double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

PlainConstraints::PlainConstraints(std::span<const ipnmt::feedback::FeedbackRule> rules) {
  using ipnmt::feedback::FeedbackKind;
  for (const auto& r : rules) {
    if (r.kind == FeedbackKind::Delete) {
      forbidden[r.position].insert(r.token);
    } else {
      required[r.position] = r.token;
    }
  }
}

std::size_t PlainConstraints::first_violation(std::span<const TokenId> tokens) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t pos = i + 1;
    if (auto it = required.find(pos); it != required.end()) {
      if (tokens[i] != it->second) return pos;
      continue;
    }
    if (auto it = forbidden.find(pos); it != forbidden.end() && it->second.count(tokens[i])) {
      return pos;
    }
  }
  return 0;
}

bool PlainConstraints::satisfied_by(std::span<const TokenId> tokens) const {
  return first_violation(tokens) == 0;
}

double sequence_logprob(const ipnmt::model::Seq2Seq& network, std::span<const TokenId> source,
                        std::span<const TokenId> tokens) {
  auto state = network.initial_state(network.encode(source));
  TokenId prev = ipnmt::model::Vocabulary::kBos;
  double total = 0.0;
  for (TokenId t : tokens) {
    auto step = network.decoder_step(state, prev);
    total += std::log(step.probs[t]);
    state = std::move(step.state);
    prev = t;
  }
  return total;
}

namespace {

// Advances `seq` like an odometer over [0, base); false after the last one.
bool next_sequence(TokenIds& seq, TokenId base) {
  for (std::size_t i = seq.size(); i > 0; --i) {
    if (++seq[i - 1] < base) return true;
    seq[i - 1] = 0;
  }
  return false;
}

}  // namespace

EnumerationResult enumerate_best(const ipnmt::model::Seq2Seq& network,
                                 std::span<const TokenId> source, std::size_t max_length,
                                 const PlainConstraints& constraints) {
  constexpr TokenId eos = ipnmt::model::Vocabulary::kEos;
  const auto vocab = static_cast<TokenId>(network.config().target_vocab_size);
  EnumerationResult best;
  for (std::size_t len = 1; len <= max_length; ++len) {
    TokenIds seq(len, 0);
    do {
      const bool eos_inside = std::find(seq.begin(), seq.end() - 1, eos) != seq.end() - 1;
      if (eos_inside || (seq.back() != eos && len < max_length)) continue;
      if (!constraints.satisfied_by(seq)) continue;
      const double lp = sequence_logprob(network, source, seq);
      if (!best.found || lp > best.logprob) best = {seq, lp, true};
    } while (next_sequence(seq, vocab));
  }
  return best;
}

namespace {

std::map<std::vector<std::string>, std::size_t> grams(const std::vector<std::string>& units,
                                                      std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= units.size(); ++i) {
    ++out[std::vector<std::string>(units.begin() + static_cast<long>(i),
                                   units.begin() + static_cast<long>(i + n))];
  }
  return out;
}

std::size_t clipped(const std::map<std::vector<std::string>, std::size_t>& h,
                    const std::map<std::vector<std::string>, std::size_t>& r) {
  std::size_t m = 0;
  for (const auto& [g, c] : h) {
    auto it = r.find(g);
    if (it != r.end()) m += std::min(c, it->second);
  }
  return m;
}

std::vector<std::string> characters(const Sentence& s) {
  std::vector<std::string> out;
  for (const auto& word : s) {
    for (unsigned char c : word) {
      if (c == ' ' || c == '\t' || c == '\n') continue;
      if ((c & 0xC0) == 0x80 && !out.empty()) {
        out.back().push_back(static_cast<char>(c));
      } else {
        out.emplace_back(1, static_cast<char>(c));
      }
    }
  }
  return out;
}

}  // namespace

double naive_corpus_bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double c = 0, r = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    c += static_cast<double>(hyps[s].size());
    r += static_cast<double>(refs[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = grams(hyps[s], n);
      for (const auto& [g, k] : h) total[n - 1] += static_cast<double>(k);
      match[n - 1] += static_cast<double>(clipped(h, grams(refs[s], n)));
    }
  }
  if (c == 0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0) return 0.0;
    log_p += std::log(match[n] / total[n]) / 4.0;
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_p);
}

double naive_chrf(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                  std::size_t order, double beta) {
  std::vector<double> match(order, 0), hyp_total(order, 0), ref_total(order, 0);
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto hc = characters(hyps[s]);
    const auto rc = characters(refs[s]);
    for (std::size_t n = 1; n <= order; ++n) {
      const auto h = grams(hc, n);
      const auto r = grams(rc, n);
      for (const auto& [g, k] : h) hyp_total[n - 1] += static_cast<double>(k);
      for (const auto& [g, k] : r) ref_total[n - 1] += static_cast<double>(k);
      match[n - 1] += static_cast<double>(clipped(h, r));
    }
  }
  double p = 0, rec = 0, used = 0;
  for (std::size_t n = 0; n < order; ++n) {
    if (hyp_total[n] == 0 || ref_total[n] == 0) continue;
    p += match[n] / hyp_total[n];
    rec += match[n] / ref_total[n];
    used += 1;
  }
  if (used == 0) return 0.0;
  p /= used;
  rec /= used;
  if (p + rec == 0) return 0.0;
  const double b2 = beta * beta;
  return 100.0 * (1 + b2) * p * rec / (b2 * p + rec);
}

double naive_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace oracles
