#include "ipnmt/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ipnmt/decoding/decoder.hpp"
#include "ipnmt/errors.hpp"

namespace ipnmt::eval {

namespace {

void check_corpus(std::size_t hyps, std::size_t refs, const char* what) {
  if (hyps == 0) throw InputError(std::string(what) + ": empty corpus");
  if (hyps != refs) {
    throw InputError(std::string(what) + ": " + std::to_string(hyps) + " hypotheses vs " +
                     std::to_string(refs) + " references");
  }
}

template <class T>
std::map<std::vector<T>, std::size_t> ngram_counts(const std::vector<T>& seq, std::size_t n) {
  std::map<std::vector<T>, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<T>(seq.begin() + static_cast<long>(i),
                            seq.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

template <class T>
std::size_t clipped_matches(const std::map<std::vector<T>, std::size_t>& hyp,
                            const std::map<std::vector<T>, std::size_t>& ref) {
  std::size_t m = 0;
  for (const auto& [gram, count] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(count, it->second);
  }
  return m;
}

std::vector<std::string> code_points(const Sentence& sentence) {
  std::vector<std::string> out;
  for (const auto& token : sentence) {
    for (std::size_t i = 0; i < token.size();) {
      const auto c = static_cast<unsigned char>(token[i]);
      std::size_t len = 1;
      if (c >= 0xF0) len = 4;
      else if (c >= 0xE0) len = 3;
      else if (c >= 0xC0) len = 2;
      len = std::min(len, token.size() - i);
      std::string cp = token.substr(i, len);
      i += len;
      if (cp == " " || cp == "\t" || cp == "\n") continue;
      out.push_back(std::move(cp));
    }
  }
  return out;
}

template <class Stats, class Fn>
Stats pooled(std::size_t n, Stats init, Fn&& sentence_stats) {
  std::vector<Stats> per(n, init);
  const auto count = static_cast<long>(n);
#ifdef IPNMT_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 8) if (n >= 64)
#endif
  for (long i = 0; i < count; ++i) per[static_cast<std::size_t>(i)] = sentence_stats(i);
  Stats total = init;
  for (const auto& s : per) total += s;
  return total;
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hypothesis_length += o.hypothesis_length;
  reference_length += o.reference_length;
  return *this;
}

double BleuStats::score() const {
  if (hypothesis_length == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  const double c = static_cast<double>(hypothesis_length);
  const double r = static_cast<double>(reference_length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

BleuStats sentence_bleu_stats(const Sentence& hyp, const Sentence& ref) {
  BleuStats s;
  s.hypothesis_length = hyp.size();
  s.reference_length = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    s.matches[n - 1] = clipped_matches(ngram_counts(hyp, n), ngram_counts(ref, n));
    s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  }
  return s;
}

double corpus_bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs) {
  check_corpus(hyps.size(), refs.size(), "corpus_bleu");
  return pooled(hyps.size(), BleuStats{}, [&](long i) {
           return sentence_bleu_stats(hyps[static_cast<std::size_t>(i)],
                                      refs[static_cast<std::size_t>(i)]);
         })
      .score();
}

ChrfStats::ChrfStats(std::size_t order)
    : matches(order, 0), hypothesis_ngrams(order, 0), reference_ngrams(order, 0) {}

ChrfStats& ChrfStats::operator+=(const ChrfStats& o) {
  for (std::size_t n = 0; n < matches.size(); ++n) {
    matches[n] += o.matches[n];
    hypothesis_ngrams[n] += o.hypothesis_ngrams[n];
    reference_ngrams[n] += o.reference_ngrams[n];
  }
  return *this;
}

double ChrfStats::score(double beta) const {
  // Orders that no sentence is long enough to fill on either side are left
  // out of the average.
  double precision = 0.0;
  double recall = 0.0;
  std::size_t effective = 0;
  for (std::size_t n = 0; n < matches.size(); ++n) {
    if (hypothesis_ngrams[n] == 0 || reference_ngrams[n] == 0) continue;
    precision += static_cast<double>(matches[n]) / static_cast<double>(hypothesis_ngrams[n]);
    recall += static_cast<double>(matches[n]) / static_cast<double>(reference_ngrams[n]);
    ++effective;
  }
  if (effective == 0) return 0.0;
  precision /= static_cast<double>(effective);
  recall /= static_cast<double>(effective);
  if (precision + recall == 0.0) return 0.0;
  const double b2 = beta * beta;
  return 100.0 * (1 + b2) * precision * recall / (b2 * precision + recall);
}

ChrfStats sentence_chrf_stats(const Sentence& hyp, const Sentence& ref, std::size_t order) {
  const auto h = code_points(hyp);
  const auto r = code_points(ref);
  ChrfStats s(order);
  for (std::size_t n = 1; n <= order; ++n) {
    s.matches[n - 1] = clipped_matches(ngram_counts(h, n), ngram_counts(r, n));
    s.hypothesis_ngrams[n - 1] = h.size() >= n ? h.size() - n + 1 : 0;
    s.reference_ngrams[n - 1] = r.size() >= n ? r.size() - n + 1 : 0;
  }
  return s;
}

double chrf(std::span<const Sentence> hyps, std::span<const Sentence> refs, std::size_t order,
            double beta) {
  check_corpus(hyps.size(), refs.size(), "chrf");
  if (order < 1) throw PreconditionError("chrf: order must be >= 1");
  return pooled(hyps.size(), ChrfStats(order), [&](long i) {
           return sentence_chrf_stats(hyps[static_cast<std::size_t>(i)],
                                      refs[static_cast<std::size_t>(i)], order);
         })
      .score(beta);
}

double perplexity(const model::Seq2Seq& network, const data::ParallelCorpus& corpus) {
  if (corpus.empty()) throw InputError("perplexity: empty corpus");
  std::vector<double> nll(corpus.size(), 0.0);
  const auto count = static_cast<long>(corpus.size());
#ifdef IPNMT_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 8) if (count >= 64)
#endif
  for (long i = 0; i < count; ++i) {
    const auto& pair = corpus.pairs[static_cast<std::size_t>(i)];
    TokenIds actions = pair.target;
    actions.push_back(model::Vocabulary::kEos);
    double sum = 0.0;
    for (double lp : network.teacher_forced_log_probs(pair.source, actions)) sum -= lp;
    nll[static_cast<std::size_t>(i)] = sum;
  }
  double total = 0.0;
  for (double v : nll) total += v;
  const double tokens = static_cast<double>(corpus.target_tokens() + corpus.size());
  return std::exp(total / tokens);
}

MetricReport evaluate(std::span<const Sentence> hyps, std::span<const Sentence> refs) {
  check_corpus(hyps.size(), refs.size(), "evaluate");
  MetricReport r;
  r.sentences = hyps.size();
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    r.bleu_stats += sentence_bleu_stats(hyps[i], refs[i]);
    r.chrf_stats += sentence_chrf_stats(hyps[i], refs[i]);
  }
  r.bleu = r.bleu_stats.score();
  r.chrf = r.chrf_stats.score();
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"bleu", r.bleu},
          {"chrf", r.chrf},
          {"sentences", r.sentences},
          {"bleu_stats",
           {{"matches", r.bleu_stats.matches},
            {"totals", r.bleu_stats.totals},
            {"hypothesis_length", r.bleu_stats.hypothesis_length},
            {"reference_length", r.bleu_stats.reference_length}}},
          {"chrf_stats",
           {{"matches", r.chrf_stats.matches},
            {"hypothesis_ngrams", r.chrf_stats.hypothesis_ngrams},
            {"reference_ngrams", r.chrf_stats.reference_ngrams}}}};
}

std::vector<TokenIds> translate_corpus(const model::Seq2Seq& network,
                                       const data::ParallelCorpus& corpus) {
  std::vector<TokenIds> out(corpus.size());
  const auto count = static_cast<long>(corpus.size());
#ifdef IPNMT_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 4) if (count >= 16)
#endif
  for (long i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] =
        decoding::greedy_translate(network, corpus.pairs[static_cast<std::size_t>(i)].source);
  }
  return out;
}

std::vector<Sentence> to_sentences(std::span<const TokenIds> ids, const model::Vocabulary& vocab) {
  std::vector<Sentence> out;
  out.reserve(ids.size());
  for (const auto& s : ids) out.push_back(vocab.decode(s));
  return out;
}

std::vector<Sentence> references(const data::ParallelCorpus& corpus,
                                 const model::Vocabulary& vocab) {
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus.pairs) out.push_back(vocab.decode(p.target));
  return out;
}

MetricReport evaluate_model(const model::Seq2Seq& network, const data::ParallelCorpus& corpus,
                            const model::Vocabulary& target_vocab) {
  const auto hyps = to_sentences(translate_corpus(network, corpus), target_vocab);
  return evaluate(hyps, references(corpus, target_vocab));
}

}  // namespace ipnmt::eval
