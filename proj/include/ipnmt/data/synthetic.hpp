#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "ipnmt/data/corpus.hpp"
#include "ipnmt/model/vocabulary.hpp"

namespace ipnmt::data {

// A two-domain translation task built from a token-wise lexicon.
//
// Domain A translates every source token through map_a. Domain B uses
// map_b, which differs from map_a on the perturbed part of the lexicon, and
// additionally swaps the output of a trigger token with the token after it.
// Perturbed tokens are rare in A sources and frequent in B sources, so a
// model trained on A knows them only vaguely.
struct SyntheticTaskSpec {
  std::size_t source_vocab_size = 200;  // including the four specials
  std::size_t target_vocab_size = 200;
  std::size_t min_length = 4;
  std::size_t max_length = 12;
  double perturbed_fraction = 0.04;  // of the regular source lexicon
  std::size_t reorder_triggers = 2;  // perturbed tokens that also reorder in B
  double perturbed_weight_a = 0.05;  // sampling weight relative to 1 for other tokens
  double perturbed_weight_b = 6.0;
  std::size_t pretrain_size = 5000;
  std::size_t dev_a_size = 200;
  std::size_t test_a_size = 200;
  std::size_t adapt_size = 500;
  std::size_t dev_b_size = 200;
  std::size_t test_b_size = 200;
  std::uint64_t seed = 7;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const SyntheticTaskSpec&) const = default;
};

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s);
void from_json(const nlohmann::json& j, SyntheticTaskSpec& s);
SyntheticTaskSpec load_task_spec(const std::filesystem::path& path);

enum class Domain { A, B };

struct SyntheticLexicon {
  // Indexed by source id; specials map to themselves.
  std::vector<TokenId> map_a;
  std::vector<TokenId> map_b;
  std::vector<bool> perturbed;
  std::vector<bool> trigger;

  TokenIds transduce(std::span<const TokenId> source, Domain domain) const;
};

struct SyntheticTask {
  model::Vocabulary source_vocab;
  model::Vocabulary target_vocab;
  SyntheticLexicon lexicon;
  ParallelCorpus pretrain;  // domain A
  ParallelCorpus dev_a;
  ParallelCorpus test_a;
  ParallelCorpus adapt;  // domain B
  ParallelCorpus dev_b;
  ParallelCorpus test_b;
};

// Deterministic in spec (including seed). No source sentence occurs in two
// splits.
SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec);

// Writes vocabularies, lexicon and every split as text files into `dir`.
void write_synthetic_task(const SyntheticTask& task, const std::filesystem::path& dir);

}  // namespace ipnmt::data
