#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ipnmt/model/vocabulary.hpp"

namespace ipnmt::data {

struct SentencePair {
  TokenIds source;
  TokenIds target;  // without EOS
  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  std::size_t target_tokens() const;
  bool operator==(const ParallelCorpus&) const = default;
};

// Whitespace tokenization of one line.
std::vector<std::string> split_tokens(const std::string& line);

// Reads one sentence per line from each side. Unknown tokens map to UNK.
// Throws AlignmentError when the line counts differ, InputError on an empty
// line or, when max_length > 0, a sentence longer than max_length.
ParallelCorpus load_corpus(const std::filesystem::path& source_path,
                           const std::filesystem::path& target_path,
                           const model::Vocabulary& source_vocab,
                           const model::Vocabulary& target_vocab, std::size_t max_length = 0);

void save_corpus(const ParallelCorpus& corpus, const std::filesystem::path& source_path,
                 const std::filesystem::path& target_path, const model::Vocabulary& source_vocab,
                 const model::Vocabulary& target_vocab);

// The `cap` most frequent tokens of a whitespace-tokenized file after the
// four specials. Equal counts are ordered lexicographically. Special token
// strings found in the file are skipped.
model::Vocabulary build_vocab(const std::filesystem::path& token_file, std::size_t cap);

}  // namespace ipnmt::data
