#include "ipnmt/data/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "ipnmt/errors.hpp"

namespace ipnmt::data {

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

TokenIds encode_line(const std::string& line, const model::Vocabulary& vocab,
                     const std::filesystem::path& path, std::size_t lineno,
                     std::size_t max_length) {
  const auto words = split_tokens(line);
  if (words.empty()) {
    throw InputError(path.string() + ":" + std::to_string(lineno) + ": empty sentence");
  }
  if (max_length > 0 && words.size() > max_length) {
    throw InputError(path.string() + ":" + std::to_string(lineno) + ": " +
                     std::to_string(words.size()) + " tokens exceed max length " +
                     std::to_string(max_length));
  }
  return vocab.encode(words);
}

void write_side(const ParallelCorpus& corpus, bool source, const std::filesystem::path& path,
                const model::Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& pair : corpus.pairs) {
    const auto words = vocab.decode(source ? pair.source : pair.target);
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out << ' ';
      out << words[i];
    }
    out << '\n';
  }
}

}  // namespace

std::size_t ParallelCorpus::target_tokens() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.target.size();
  return n;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

ParallelCorpus load_corpus(const std::filesystem::path& source_path,
                           const std::filesystem::path& target_path,
                           const model::Vocabulary& source_vocab,
                           const model::Vocabulary& target_vocab, std::size_t max_length) {
  const auto src = read_lines(source_path);
  const auto tgt = read_lines(target_path);
  if (src.size() != tgt.size()) {
    throw AlignmentError("line counts differ: " + source_path.string() + " has " +
                         std::to_string(src.size()) + ", " + target_path.string() + " has " +
                         std::to_string(tgt.size()));
  }
  ParallelCorpus corpus;
  corpus.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    corpus.pairs.push_back({encode_line(src[i], source_vocab, source_path, i + 1, max_length),
                            encode_line(tgt[i], target_vocab, target_path, i + 1, max_length)});
  }
  return corpus;
}

void save_corpus(const ParallelCorpus& corpus, const std::filesystem::path& source_path,
                 const std::filesystem::path& target_path, const model::Vocabulary& source_vocab,
                 const model::Vocabulary& target_vocab) {
  write_side(corpus, true, source_path, source_vocab);
  write_side(corpus, false, target_path, target_vocab);
}

model::Vocabulary build_vocab(const std::filesystem::path& token_file, std::size_t cap) {
  const model::Vocabulary specials;
  std::map<std::string, std::size_t> counts;
  for (const auto& line : read_lines(token_file)) {
    for (auto& w : split_tokens(line)) {
      if (!specials.find(w)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is already lexicographic, so a stable sort keeps that order for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);
  model::Vocabulary vocab;
  for (const auto& [w, _] : ranked) vocab.add(w);
  return vocab;
}

}  // namespace ipnmt::data
