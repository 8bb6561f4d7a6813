#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipnmt/data/corpus.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/model/vocabulary.hpp"

namespace ipnmt::eval {

using Sentence = std::vector<std::string>;

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& other);
  double score() const;  // 0..100, no smoothing
};

BleuStats sentence_bleu_stats(const Sentence& hypothesis, const Sentence& reference);

// Classic corpus BLEU over the given tokenization: clipped 1-4-gram counts
// pooled over the corpus, geometric mean of precisions, brevity penalty.
double corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

struct ChrfStats {
  std::vector<std::size_t> matches;  // per order 1..n
  std::vector<std::size_t> hypothesis_ngrams;
  std::vector<std::size_t> reference_ngrams;

  explicit ChrfStats(std::size_t order = 6);
  ChrfStats& operator+=(const ChrfStats& other);
  double score(double beta = 2.0) const;  // 0..100
};

// Character n-grams of the sentence with whitespace removed; n-grams run
// across token boundaries. Characters are UTF-8 code points.
ChrfStats sentence_chrf_stats(const Sentence& hypothesis, const Sentence& reference,
                              std::size_t order = 6);

// Character n-gram F-score. Precision and recall are pooled per order over
// the corpus, averaged over the orders 1..order present on both sides, then
// combined as F-beta.
double chrf(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
            std::size_t order = 6, double beta = 2.0);

// exp of the mean per-token NLL under teacher forcing, EOS included.
double perplexity(const model::Seq2Seq& network, const data::ParallelCorpus& corpus);

struct MetricReport {
  double bleu = 0.0;
  double chrf = 0.0;
  std::size_t sentences = 0;
  BleuStats bleu_stats;
  ChrfStats chrf_stats;
};

MetricReport evaluate(std::span<const Sentence> hypotheses, std::span<const Sentence> references);
nlohmann::json to_json(const MetricReport& report);

// Greedy translation of every source (EOS stripped).
std::vector<TokenIds> translate_corpus(const model::Seq2Seq& network,
                                       const data::ParallelCorpus& corpus);

std::vector<Sentence> to_sentences(std::span<const TokenIds> ids, const model::Vocabulary& vocab);
std::vector<Sentence> references(const data::ParallelCorpus& corpus,
                                 const model::Vocabulary& vocab);

// translate_corpus + evaluate.
MetricReport evaluate_model(const model::Seq2Seq& network, const data::ParallelCorpus& corpus,
                            const model::Vocabulary& target_vocab);

}  // namespace ipnmt::eval
