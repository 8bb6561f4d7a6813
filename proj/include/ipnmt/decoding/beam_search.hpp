#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ipnmt/decoding/uncertainty.hpp"
#include "ipnmt/errors.hpp"
#include "ipnmt/feedback/rules.hpp"
#include "ipnmt/model/vocabulary.hpp"

namespace ipnmt::decoding {

// Output of one decoder step: the next-token distribution and the state
// after consuming the previous token.
template <class State>
struct Step {
  std::vector<double> probs;
  std::vector<double> log_probs;
  State state;
};

// Anything beam search can drive: start() consumes BOS, advance() consumes
// one more token. Both return the distribution over the following token.
template <class M>
concept StepModel = requires(const M& m, const typename M::State& s, TokenId t) {
  { m.vocab_size() } -> std::convertible_to<std::size_t>;
  { m.start() } -> std::same_as<Step<typename M::State>>;
  { m.advance(s, t) } -> std::same_as<Step<typename M::State>>;
};

template <class State>
struct Hypothesis {
  TokenIds tokens;
  double logprob = 0.0;
  std::vector<double> entropies;        // H_t of the step that emitted tokens[t]
  std::vector<double> token_log_probs;  // log π of each emitted token
  bool finished = false;                // last token is EOS

  State state;
  std::vector<double> next_log_probs;
  double next_entropy = 0.0;
};

// Candidate for the next beam: extend `hypothesis` with `token` (landing at
// 1-based `position`), or carry a finished hypothesis over unchanged.
struct Expansion {
  std::size_t hypothesis = 0;
  TokenId token = 0;
  double score = 0.0;
  std::size_t position = 0;
  bool carried = false;
};

struct PartialTranslation {
  TokenIds tokens;  // includes the trailing EOS when complete
  std::vector<double> entropies;
  std::vector<double> token_log_probs;
  double logprob = 0.0;
  std::vector<std::size_t> uncertain_positions;  // 1-based, ascending
  bool complete = false;
  bool truncated = false;  // stopped at the length limit without EOS

  bool final() const { return complete || truncated; }
  bool operator==(const PartialTranslation&) const = default;
};

struct SearchOptions {
  std::size_t beam_size = 5;
  std::size_t prefix_length = 0;
  std::size_t max_length = 40;
  double epsilon = 1.0;
  double delta = 0.5;
};

// Keeps candidates whose new token satisfies the rule at its position.
// Carried (finished) hypotheses pass untouched.
inline std::vector<Expansion> apply_constraints(std::span<const Expansion> expansions,
                                                const feedback::FeedbackRuleSet& rules) {
  if (rules.empty()) return {expansions.begin(), expansions.end()};
  std::vector<Expansion> kept;
  kept.reserve(expansions.size());
  for (const Expansion& e : expansions) {
    if (e.carried || rules.allows(e.position, e.token)) kept.push_back(e);
  }
  return kept;
}

// Total order used by argmax_k: higher score first; ties go to the
// lexicographically smaller token sequence (the lower new token id between
// siblings), then to the shorter hypothesis.
template <class State>
bool ranks_before(const Expansion& a, const Expansion& b,
                  std::span<const Hypothesis<State>> parents) {
  if (a.score != b.score) return a.score > b.score;
  const TokenIds& pa = parents[a.hypothesis].tokens;
  const TokenIds& pb = parents[b.hypothesis].tokens;
  const std::size_t la = pa.size() + (a.carried ? 0 : 1);
  const std::size_t lb = pb.size() + (b.carried ? 0 : 1);
  const std::size_t n = std::min(la, lb);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId ta = i < pa.size() ? pa[i] : a.token;
    const TokenId tb = i < pb.size() ? pb[i] : b.token;
    if (ta != tb) return ta < tb;
  }
  return la < lb;
}

// apply_constraints followed by argmax_k. Throws ConstraintExhausted when
// no candidate survives.
template <class State>
std::vector<Expansion> kbest(std::span<const Expansion> expansions, std::size_t k,
                             const feedback::FeedbackRuleSet& rules,
                             std::span<const Hypothesis<State>> parents) {
  if (k < 1) throw PreconditionError("kbest: k must be >= 1");
  std::vector<Expansion> survivors = apply_constraints(expansions, rules);
  if (survivors.empty()) {
    std::size_t position = 0;
    for (const auto& e : expansions) {
      if (!e.carried) position = position ? std::min(position, e.position) : e.position;
    }
    throw ConstraintExhausted(position, "feedback rules leave no candidate at position " +
                                            std::to_string(position));
  }
  const std::size_t keep = std::min(k, survivors.size());
  auto before = [&](const Expansion& a, const Expansion& b) {
    return ranks_before<State>(a, b, parents);
  };
  std::partial_sort(survivors.begin(), survivors.begin() + static_cast<std::ptrdiff_t>(keep),
                    survivors.end(), before);
  survivors.resize(keep);
  return survivors;
}

template <class State>
PartialTranslation to_partial(const Hypothesis<State>& h, double epsilon, std::size_t max_length) {
  PartialTranslation p;
  p.tokens = h.tokens;
  p.entropies = h.entropies;
  p.token_log_probs = h.token_log_probs;
  p.logprob = h.logprob;
  p.complete = h.finished;
  p.truncated = !h.finished && h.tokens.size() >= max_length;
  for (std::size_t i = 0; i < h.entropies.size(); ++i) {
    if (is_uncertain_token(h.entropies[i], epsilon)) p.uncertain_positions.push_back(i + 1);
  }
  return p;
}

template <class State>
using BeamObserver = std::function<void(std::size_t step, std::span<const Hypothesis<State>>)>;

// Constrained beam search that stops at the first uncertain sequence longer
// than the prefix. Returns the best hypothesis when it is finished, when the
// stop criterion fires, or when max_length is reached.
template <StepModel M>
PartialTranslation beam_search(const M& model, const SearchOptions& options,
                               const feedback::FeedbackRuleSet& rules,
                               const BeamObserver<typename M::State>& observer = {}) {
  using State = typename M::State;
  if (options.beam_size < 1) throw PreconditionError("beam_search: beam size must be >= 1");
  if (options.prefix_length >= options.max_length) {
    throw PreconditionError("beam_search: prefix length " + std::to_string(options.prefix_length) +
                            " must be below max length " + std::to_string(options.max_length));
  }
  const std::size_t vocab = model.vocab_size();

  std::vector<Hypothesis<State>> beam(1);
  {
    auto first = model.start();
    beam[0].next_entropy = entropy(first.probs);
    beam[0].next_log_probs = std::move(first.log_probs);
    beam[0].state = std::move(first.state);
  }

  std::vector<Expansion> expansions;
  for (std::size_t t = 1; t <= options.max_length; ++t) {
    expansions.clear();
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const auto& h = beam[b];
      if (h.finished) {
        expansions.push_back({b, 0, h.logprob, h.tokens.size(), true});
        continue;
      }
      for (TokenId tok = 0; tok < vocab; ++tok) {
        expansions.push_back({b, tok, h.logprob + h.next_log_probs[tok], t, false});
      }
    }
    const std::vector<Expansion> chosen =
        kbest<State>(expansions, options.beam_size, rules, beam);

    std::vector<Hypothesis<State>> next;
    next.reserve(chosen.size());
    for (const Expansion& e : chosen) {
      const auto& parent = beam[e.hypothesis];
      if (e.carried) {
        next.push_back(parent);
        continue;
      }
      Hypothesis<State> child;
      child.tokens = parent.tokens;
      child.tokens.push_back(e.token);
      child.entropies = parent.entropies;
      child.entropies.push_back(parent.next_entropy);
      child.token_log_probs = parent.token_log_probs;
      child.token_log_probs.push_back(parent.next_log_probs[e.token]);
      child.logprob = e.score;
      child.finished = e.token == model::Vocabulary::kEos;
      if (!child.finished) {
        auto step = model.advance(parent.state, e.token);
        child.next_entropy = entropy(step.probs);
        child.next_log_probs = std::move(step.log_probs);
        child.state = std::move(step.state);
      }
      next.push_back(std::move(child));
    }
    beam = std::move(next);
    if (observer) observer(t, beam);

    const auto& best = beam.front();
    if (best.finished) break;
    const std::size_t len = best.tokens.size();
    if (len > options.prefix_length && len >= 2 &&
        is_uncertain_sequence(best.entropies[len - 1], best.entropies[len - 2], options.epsilon,
                              options.delta)) {
      break;
    }
  }
  return to_partial(beam.front(), options.epsilon, options.max_length);
}

// Argmax decoding without constraints or stopping criterion. Ties go to the
// lower token id. The result ends in EOS unless max_length was reached.
template <StepModel M>
TokenIds greedy_decode(const M& model, std::size_t max_length) {
  TokenIds out;
  auto step = model.start();
  while (out.size() < max_length) {
    const auto best = static_cast<TokenId>(
        std::max_element(step.log_probs.begin(), step.log_probs.end()) - step.log_probs.begin());
    out.push_back(best);
    if (best == model::Vocabulary::kEos) break;
    step = model.advance(step.state, best);
  }
  return out;
}

}  // namespace ipnmt::decoding
