#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "ipnmt/errors.hpp"
#include "ipnmt/eval/metrics.hpp"
#include "oracles.hpp"

using namespace ipnmt;
using eval::Sentence;

namespace {

Sentence words(const std::string& line) { return data::split_tokens(line); }

std::vector<Sentence> random_corpus(Rng& rng, std::size_t n, std::size_t alphabet) {
  std::vector<Sentence> out(n);
  for (auto& s : out) {
    const std::size_t len = 1 + rng.below(9);
    for (std::size_t i = 0; i < len; ++i) {
      std::string w;
      for (std::size_t k = 1 + rng.below(3); k > 0; --k) w += static_cast<char>('a' + rng.below(alphabet));
      s.push_back(w);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("identical corpora score 100") {
  const std::vector<Sentence> c{words("a b c d e"), words("x y z w")};
  CHECK(eval::corpus_bleu(c, c) == doctest::Approx(100.0));
  CHECK(eval::chrf(c, c) == doctest::Approx(100.0));
}

TEST_CASE("bleu by hand") {
  const std::vector<Sentence> hyp{words("the cat sat on mat")};
  const std::vector<Sentence> ref{words("the cat sat on the mat")};
  // Precisions 5/5, 3/4, 2/3, 1/2; brevity penalty exp(1 - 6/5).
  const double expect = 100.0 * std::exp(-0.2) * std::pow(0.25, 0.25);
  CHECK(eval::corpus_bleu(hyp, ref) == doctest::Approx(expect).epsilon(1e-12));
  const auto st = eval::sentence_bleu_stats(hyp[0], ref[0]);
  CHECK(st.matches[1] == 3);
  CHECK(st.totals[3] == 2);

  // No 4-gram match and no smoothing.
  const std::vector<Sentence> h2{words("a b c x")};
  const std::vector<Sentence> r2{words("a b c d")};
  CHECK(eval::corpus_bleu(h2, r2) == 0.0);
}

TEST_CASE("chrf by hand") {
  const std::vector<Sentence> hyp{words("ab")};
  const std::vector<Sentence> ref{words("ac")};
  // Unigram P = R = 1/2, bigram P = R = 0: averages 1/4.
  CHECK(eval::chrf(hyp, ref, 2, 1.0) == doctest::Approx(25.0).epsilon(1e-12));
  // Whitespace is ignored, so token boundaries do not matter.
  const std::vector<Sentence> split{words("a b")};
  CHECK(eval::chrf(split, std::vector<Sentence>{words("ab")}, 2) == doctest::Approx(100.0));
}

TEST_CASE("chrf counts code points") {
  const std::vector<Sentence> hyp{Sentence{"\xC3\xBC" "a"}};
  const std::vector<Sentence> ref{Sentence{"\xC3\xBC" "b"}};
  // Per code point P = R = 1/2; per byte it would be 2/3.
  CHECK(eval::chrf(hyp, ref, 1, 1.0) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(eval::chrf(hyp, ref, 1, 1.0) ==
        doctest::Approx(oracles::naive_chrf(hyp, ref, 1, 1.0)).epsilon(1e-12));
}

TEST_CASE("metrics agree with the naive oracles") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const auto hyp = random_corpus(rng, n, 3 + rng.below(3));
    const auto ref = random_corpus(rng, n, 3 + rng.below(3));
    CHECK(eval::corpus_bleu(hyp, ref) ==
          doctest::Approx(oracles::naive_corpus_bleu(hyp, ref)).epsilon(1e-9));
    CHECK(eval::chrf(hyp, ref) == doctest::Approx(oracles::naive_chrf(hyp, ref)).epsilon(1e-9));
  }
}

TEST_CASE("corpus shape errors") {
  const std::vector<Sentence> one{words("a")};
  const std::vector<Sentence> two{words("a"), words("b")};
  CHECK_THROWS_AS(eval::corpus_bleu(one, two), InputError);
  CHECK_THROWS_AS(eval::chrf(std::vector<Sentence>{}, std::vector<Sentence>{}), InputError);
}

TEST_CASE("perplexity of a uniform model is the vocabulary size") {
  const auto net = model::Seq2Seq::zeros(fixtures::tiny_config(8, 11));
  data::ParallelCorpus c;
  c.pairs.push_back({{4, 5}, {6, 7, 8}});
  c.pairs.push_back({{6}, {4}});
  CHECK(eval::perplexity(net, c) == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("evaluate_model decodes and scores") {
  const auto tv = fixtures::letters_vocab(5, "t");
  const auto net = fixtures::random_model(fixtures::tiny_config(9, tv.size()), 2);
  data::ParallelCorpus c;
  c.pairs.push_back({{4, 5, 6}, {4, 5}});
  c.pairs.push_back({{7, 8}, {6}});
  const auto hyps = eval::translate_corpus(net, c);
  REQUIRE(hyps.size() == 2);
  const auto report = eval::evaluate_model(net, c, tv);
  CHECK(report.sentences == 2);
  const auto h = eval::to_sentences(hyps, tv);
  const auto r = eval::references(c, tv);
  CHECK(r[0] == Sentence{"t0", "t1"});
  CHECK(report.chrf == doctest::Approx(eval::chrf(h, r)));
  const auto j = eval::to_json(report);
  CHECK(j.contains("bleu"));
  CHECK(j.contains("chrf"));
}
