#include "ipnmt/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "ipnmt/errors.hpp"
#include "ipnmt/rng.hpp"

namespace ipnmt::data {

namespace {

using model::Vocabulary;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sentence_seed(std::uint64_t seed, std::uint64_t split, std::uint64_t index,
                            std::uint64_t attempt) {
  return mix(mix(mix(seed ^ (split << 56)) ^ index) ^ (attempt * 0x632be59bd9b4e019ULL));
}

std::string name(char prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  return prefix + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

class TokenSampler {
 public:
  TokenSampler(const SyntheticLexicon& lex, double perturbed_weight) {
    double total = 0.0;
    for (TokenId s = Vocabulary::kNumSpecials; s < lex.map_a.size(); ++s) {
      total += lex.perturbed[s] ? perturbed_weight : 1.0;
      ids_.push_back(s);
      cumulative_.push_back(total);
    }
  }

  TokenId draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return ids_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<TokenId> ids_;
  std::vector<double> cumulative_;
};

void check_range(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi)) {
    throw ConfigError(std::string("synthetic spec: ") + what + " must lie in [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (source_vocab_size <= Vocabulary::kNumSpecials + 1) {
    throw ConfigError("synthetic spec: source_vocab_size must exceed 5");
  }
  if (target_vocab_size < source_vocab_size) {
    throw ConfigError("synthetic spec: target_vocab_size must be >= source_vocab_size");
  }
  if (min_length < 1 || max_length < min_length) {
    throw ConfigError("synthetic spec: need 1 <= min_length <= max_length");
  }
  check_range(perturbed_fraction, 0.0, 1.0, "perturbed_fraction");
  const auto regular = source_vocab_size - Vocabulary::kNumSpecials;
  const auto perturbed = static_cast<std::size_t>(std::lround(perturbed_fraction * regular));
  if (reorder_triggers > perturbed) {
    throw ConfigError("synthetic spec: reorder_triggers exceeds the perturbed lexicon");
  }
  if (perturbed_weight_a < 0 || perturbed_weight_b < 0) {
    throw ConfigError("synthetic spec: sampling weights must be >= 0");
  }
  if (pretrain_size == 0 || adapt_size == 0) {
    throw ConfigError("synthetic spec: pretrain_size and adapt_size must be >= 1");
  }
}

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) {
  j = {{"source_vocab_size", s.source_vocab_size},
       {"target_vocab_size", s.target_vocab_size},
       {"min_length", s.min_length},
       {"max_length", s.max_length},
       {"perturbed_fraction", s.perturbed_fraction},
       {"reorder_triggers", s.reorder_triggers},
       {"perturbed_weight_a", s.perturbed_weight_a},
       {"perturbed_weight_b", s.perturbed_weight_b},
       {"pretrain_size", s.pretrain_size},
       {"dev_a_size", s.dev_a_size},
       {"test_a_size", s.test_a_size},
       {"adapt_size", s.adapt_size},
       {"dev_b_size", s.dev_b_size},
       {"test_b_size", s.test_b_size},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticTaskSpec& s) {
  SyntheticTaskSpec d;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  s = d;
  get("source_vocab_size", s.source_vocab_size);
  get("target_vocab_size", s.target_vocab_size);
  get("min_length", s.min_length);
  get("max_length", s.max_length);
  get("perturbed_fraction", s.perturbed_fraction);
  get("reorder_triggers", s.reorder_triggers);
  get("perturbed_weight_a", s.perturbed_weight_a);
  get("perturbed_weight_b", s.perturbed_weight_b);
  get("pretrain_size", s.pretrain_size);
  get("dev_a_size", s.dev_a_size);
  get("test_a_size", s.test_a_size);
  get("adapt_size", s.adapt_size);
  get("dev_b_size", s.dev_b_size);
  get("test_b_size", s.test_b_size);
  get("seed", s.seed);
}

SyntheticTaskSpec load_task_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  SyntheticTaskSpec spec;
  try {
    spec = nlohmann::json::parse(in).get<SyntheticTaskSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

TokenIds SyntheticLexicon::transduce(std::span<const TokenId> source, Domain domain) const {
  const auto& map = domain == Domain::A ? map_a : map_b;
  TokenIds out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const TokenId x = source[i];
    if (domain == Domain::B && trigger[x] && i + 1 < source.size() && !trigger[source[i + 1]]) {
      out.push_back(map[source[i + 1]]);
      out.push_back(map[x]);
      ++i;
    } else {
      out.push_back(map[x]);
    }
  }
  return out;
}

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  SyntheticTask task;
  const std::size_t ns = spec.source_vocab_size;
  const std::size_t nt = spec.target_vocab_size;
  const std::size_t regular = ns - Vocabulary::kNumSpecials;

  for (std::size_t i = 0; i < regular; ++i) task.source_vocab.add(name('s', i));
  for (std::size_t i = 0; i < nt - Vocabulary::kNumSpecials; ++i) {
    task.target_vocab.add(name('t', i));
  }

  Rng lex_rng(mix(spec.seed));
  std::vector<TokenId> targets;
  for (TokenId t = Vocabulary::kNumSpecials; t < nt; ++t) targets.push_back(t);
  lex_rng.shuffle(targets.begin(), targets.end());

  SyntheticLexicon& lex = task.lexicon;
  lex.map_a.resize(ns);
  lex.perturbed.assign(ns, false);
  lex.trigger.assign(ns, false);
  for (TokenId s = 0; s < Vocabulary::kNumSpecials; ++s) lex.map_a[s] = s;
  for (std::size_t i = 0; i < regular; ++i) {
    lex.map_a[Vocabulary::kNumSpecials + i] = targets[i];
  }
  lex.map_b = lex.map_a;

  std::vector<TokenId> order;
  for (TokenId s = Vocabulary::kNumSpecials; s < ns; ++s) order.push_back(s);
  lex_rng.shuffle(order.begin(), order.end());
  const auto n_perturbed =
      static_cast<std::size_t>(std::lround(spec.perturbed_fraction * static_cast<double>(regular)));
  std::vector<TokenId> perturbed(order.begin(), order.begin() + static_cast<long>(n_perturbed));
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    lex.perturbed[perturbed[i]] = true;
    if (i < spec.reorder_triggers) lex.trigger[perturbed[i]] = true;
    // Rotating map_a over the perturbed set gives each perturbed token a
    // different B translation.
    lex.map_b[perturbed[i]] = lex.map_a[perturbed[(i + 1) % perturbed.size()]];
  }
  if (perturbed.size() == 1) {
    const TokenId s = perturbed[0];
    lex.map_b[s] = lex.map_a[order.size() > 1 ? order[1] : s];
  }

  const TokenSampler sampler_a(lex, spec.perturbed_weight_a);
  const TokenSampler sampler_b(lex, spec.perturbed_weight_b);
  std::set<TokenIds> seen;
  const std::size_t span = spec.max_length - spec.min_length + 1;

  auto fill = [&](ParallelCorpus& corpus, std::size_t count, std::uint64_t split, Domain domain) {
    const TokenSampler& sampler = domain == Domain::A ? sampler_a : sampler_b;
    corpus.pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt > 1000) {
          throw ConfigError("synthetic spec: cannot draw enough distinct sentences");
        }
        Rng rng(sentence_seed(spec.seed, split, i, attempt));
        TokenIds source(spec.min_length + rng.below(span));
        for (auto& tok : source) tok = sampler.draw(rng);
        if (!seen.insert(source).second) continue;
        corpus.pairs.push_back({source, lex.transduce(source, domain)});
        break;
      }
    }
  };
  fill(task.pretrain, spec.pretrain_size, 1, Domain::A);
  fill(task.dev_a, spec.dev_a_size, 2, Domain::A);
  fill(task.test_a, spec.test_a_size, 3, Domain::A);
  fill(task.adapt, spec.adapt_size, 4, Domain::B);
  fill(task.dev_b, spec.dev_b_size, 5, Domain::B);
  fill(task.test_b, spec.test_b_size, 6, Domain::B);
  return task;
}

void write_synthetic_task(const SyntheticTask& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  task.source_vocab.save(dir / "source.vocab");
  task.target_vocab.save(dir / "target.vocab");
  {
    std::ofstream out(dir / "lexicon.tsv");
    out << "source\tdomain_a\tdomain_b\tperturbed\ttrigger\n";
    const auto& lex = task.lexicon;
    for (TokenId s = Vocabulary::kNumSpecials; s < lex.map_a.size(); ++s) {
      out << task.source_vocab.token(s) << '\t' << task.target_vocab.token(lex.map_a[s]) << '\t'
          << task.target_vocab.token(lex.map_b[s]) << '\t' << lex.perturbed[s] << '\t'
          << lex.trigger[s] << '\n';
    }
  }
  const std::pair<const char*, const ParallelCorpus*> splits[] = {
      {"pretrain", &task.pretrain}, {"dev_a", &task.dev_a},   {"test_a", &task.test_a},
      {"adapt", &task.adapt},       {"dev_b", &task.dev_b},   {"test_b", &task.test_b}};
  for (const auto& [stem, corpus] : splits) {
    save_corpus(*corpus, dir / (std::string(stem) + ".src"), dir / (std::string(stem) + ".tgt"),
                task.source_vocab, task.target_vocab);
  }
}

}  // namespace ipnmt::data
