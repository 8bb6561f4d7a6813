#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ipnmt {

using TokenId = std::uint32_t;
using TokenIds = std::vector<TokenId>;

namespace model {

// Bidirectional token <-> id map with four reserved specials at ids 0..3.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumSpecials = 4;

  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // Specials followed by `tokens` in order. Duplicates and specials in the
  // list throw VocabularyError.
  explicit Vocabulary(std::span<const std::string> tokens);

  TokenId add(std::string_view token);

  std::optional<TokenId> find(std::string_view token) const;
  // UNK for unknown tokens.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(TokenId id) const { return id < tokens_.size(); }
  std::size_t size() const { return tokens_.size(); }

  TokenIds encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  // Non-special tokens in id order.
  std::vector<std::string> regular_tokens() const;

  // One token per line; line k holds id k + 4.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Throws VocabularyError if any id is outside the vocabulary.
void check_ids(std::span<const TokenId> ids, std::size_t vocab_size, const char* what);

}  // namespace model
}  // namespace ipnmt
