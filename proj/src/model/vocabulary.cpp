#include "ipnmt/model/vocabulary.hpp"

#include <fstream>

#include "ipnmt/errors.hpp"

namespace ipnmt::model {

Vocabulary::Vocabulary() {
  for (std::string_view special : {kPadToken, kBosToken, kEosToken, kUnkToken}) {
    index_.emplace(std::string(special), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(special);
  }
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (find(t)) throw VocabularyError("duplicate or reserved token '" + t + "'");
    add(t);
  }
}

TokenId Vocabulary::add(std::string_view token) {
  if (auto existing = find(token)) return *existing;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  return find(token).value_or(kUnk);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

TokenIds Vocabulary::encode(std::span<const std::string> words) const {
  TokenIds ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (TokenId i : ids) words.push_back(token(i));
  return words;
}

std::vector<std::string> Vocabulary::regular_tokens() const {
  return {tokens_.begin() + kNumSpecials, tokens_.end()};
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocabulary file " + path.string());
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(tokens);
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size, const char* what) {
  for (TokenId id : ids) {
    if (id >= vocab_size) {
      throw VocabularyError(std::string(what) + ": token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

}  // namespace ipnmt::model
