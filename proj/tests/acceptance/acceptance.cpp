// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "ipnmt/data/pretrain.hpp"
#include "ipnmt/data/synthetic.hpp"
#include "ipnmt/decoding/decoder.hpp"
#include "ipnmt/errors.hpp"
#include "ipnmt/eval/metrics.hpp"
#include "ipnmt/feedback/learning.hpp"
#include "ipnmt/oracle/oracle.hpp"
#include "ipnmt/server/server.hpp"
#include "ipnmt/session/session.hpp"
#include "oracles.hpp"

using namespace ipnmt;
using feedback::FeedbackKind;
using feedback::FeedbackRule;
using feedback::FeedbackRuleSet;
using model::Vocabulary;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and sizes.
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kDecodingCases = 500;
constexpr std::size_t kSoundnessRounds = 1000;
constexpr std::size_t kFloorDraws = 100000;
constexpr double kFloorMeanTolerance = 0.01;
constexpr std::size_t kUpdateInstances = 100;
constexpr double kAdaptationGain = 2.0;
constexpr double kSubstituteSlack = 0.5;
constexpr double kMaxRounds = 6.0;
constexpr double kKeepDeleteBeamBand = 1.0;
constexpr double kMetricTolerance = 1e-9;
constexpr std::size_t kGreedySources = 100;

const std::vector<std::uint64_t> kAdaptationSeeds{11, 12, 13};
const std::vector<std::uint64_t> kBeamSeeds{11, 12};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path out_dir = "acceptance_out";
  fs::path schema_dir;
  fs::path validator;
  std::string python = "python3";
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- P1

Outcome gradients() {
  using gradcheck::random_tensor;
  using nn::Tape;
  using nn::Var;
  double worst = 0.0;
  std::size_t checked = 0;
  auto run = [&](const gradcheck::Builder& b, std::vector<nn::Tensor> in, std::uint64_t seed) {
    const auto r = gradcheck::check(b, std::move(in), seed);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  };
  Rng rng(101);
  for (int rep = 0; rep < 3; ++rep) {
    const std::uint64_t s = 10 * static_cast<std::uint64_t>(rep);
    auto a = random_tensor(rng, {6});
    auto b = random_tensor(rng, {6});
    run([](Tape&, const std::vector<Var>& v) { return nn::add(v[0], v[1]); }, {a, b}, s + 1);
    run([](Tape&, const std::vector<Var>& v) { return nn::mul(v[0], v[1]); }, {a, b}, s + 2);
    run([](Tape&, const std::vector<Var>& v) { return nn::scale(v[0], 0.7); }, {a}, s + 3);
    run([](Tape&, const std::vector<Var>& v) { return nn::tanh(v[0]); }, {a}, s + 4);
    run([](Tape&, const std::vector<Var>& v) { return nn::sigmoid(v[0]); }, {a}, s + 5);
    run([](Tape&, const std::vector<Var>& v) { return nn::sum(v[0]); }, {a}, s + 6);

    auto x = random_tensor(rng, {5});
    auto xm = random_tensor(rng, {3, 5});
    auto w = random_tensor(rng, {5, 8});
    auto bias = random_tensor(rng, {8});
    auto aff = [](Tape&, const std::vector<Var>& v) { return nn::affine(v[0], v[1], v[2]); };
    run(aff, {x, w, bias}, s + 7);
    run(aff, {xm, w, bias}, s + 8);

    auto z = random_tensor(rng, {8}, -3, 3);
    run([](Tape&, const std::vector<Var>& v) { return nn::softmax(v[0]); }, {z}, s + 9);
    run([](Tape&, const std::vector<Var>& v) { return nn::log_softmax(v[0]); }, {z}, s + 10);
    run([](Tape&, const std::vector<Var>& v) { return nn::log_softmax_pick(v[0], 3); }, {z},
        s + 11);

    auto c3 = random_tensor(rng, {3});
    auto m = random_tensor(rng, {3, 4});
    run(
        [](Tape&, const std::vector<Var>& v) {
          const std::vector<Var> parts{v[0], v[1]};
          return nn::concat(parts);
        },
        {c3, x}, s + 12);
    run([](Tape&, const std::vector<Var>& v) { return nn::slice(v[0], 1, 3); }, {x}, s + 13);
    run(
        [](Tape&, const std::vector<Var>& v) {
          const std::vector<Var> rows{v[0], v[1], v[0]};
          return nn::stack_rows(rows);
        },
        {c3, random_tensor(rng, {3})}, s + 14);
    run([](Tape&, const std::vector<Var>& v) { return nn::row(v[0], 1); }, {m}, s + 15);
    run(
        [](Tape&, const std::vector<Var>& v) {
          const std::vector<Var> parts{nn::sum(v[0]), nn::sum(nn::mul(v[0], v[0]))};
          const std::vector<double> coef{-0.4, 1.3};
          return nn::weighted_sum(parts, coef);
        },
        {c3}, s + 16);

    const std::size_t in = 4, hidden = 4;
    std::vector<nn::Tensor> lstm_in{random_tensor(rng, {in}), random_tensor(rng, {hidden}),
                                    random_tensor(rng, {hidden}),
                                    random_tensor(rng, {in + hidden, 4 * hidden}),
                                    random_tensor(rng, {4 * hidden})};
    for (int which = 0; which < 2; ++which) {
      run(
          [which](Tape&, const std::vector<Var>& v) {
            const auto o = nn::lstm_step(v[0], v[1], v[2], {v[3], v[4]});
            return which == 0 ? o.h : o.c;
          },
          lstm_in, s + 17 + static_cast<std::uint64_t>(which));
    }
    std::vector<nn::Tensor> att_in{random_tensor(rng, {4}), random_tensor(rng, {5, 3}),
                                   random_tensor(rng, {4, 3})};
    run([](Tape&, const std::vector<Var>& v) { return nn::global_attention(v[0], v[1], v[2]).context; },
        att_in, s + 19);
    run([](Tape&, const std::vector<Var>& v) { return nn::global_attention(v[0], v[1], v[2]).weights; },
        att_in, s + 20);
  }
  const double op_worst = worst;

  // REINFORCE surrogate over every parameter of small models.
  double surrogate_worst = 0.0;
  std::size_t surrogate_checked = 0;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const std::size_t dim = 4 + 2 * k;  // 4, 6, 8
    const std::size_t vocab = 8 + 2 * k;  // 8, 10, 12
    auto net = fixtures::random_model(fixtures::tiny_config(vocab, vocab, dim, dim), 200 + k, 0.5);
    Rng r(300 + k);
    const auto source = fixtures::random_source(r, vocab, 2, 4);
    auto actions = fixtures::random_source(r, vocab, 2, 4);
    actions.push_back(Vocabulary::kEos);
    feedback::RewardVector rw;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const double v = i % 3 == 0 ? 0.5 : (i % 3 == 1 ? -0.1 : r.uniform(0.0, 0.2));
      rw.push_back({v, i % 3 != 2});
    }
    feedback::surrogate_gradient(net, source, actions, rw);
    for (auto* p : net.params().all()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double fd = oracles::central_difference(
            [&] { return feedback::surrogate_loss(net, source, actions, rw); }, p->value[i], 1e-5);
        surrogate_worst = std::max(surrogate_worst, oracles::relative_error(fd, p->gradient[i], 1e-6));
        ++surrogate_checked;
      }
    }
  }
  const bool pass = op_worst < kGradTolerance && surrogate_worst < kGradTolerance;
  return {pass, fmt("ops max rel err %.2e over %zu entries, surrogate %.2e over %zu parameters "
                    "(tol %.0e)",
                    op_worst, checked, surrogate_worst, surrogate_checked, kGradTolerance)};
}

// ---------------------------------------------------------------- P2

Outcome decoding_oracle() {
  Rng rng(202);
  std::size_t matched = 0, with_rules = 0, infeasible = 0;
  std::string first_failure;
  std::size_t cases = 0;
  for (std::size_t trial = 0; cases < kDecodingCases; ++trial) {
    const std::size_t vocab = 5 + rng.below(2);   // |V| in {5, 6}
    const std::size_t max_len = 2 + rng.below(4);  // L in 2..5
    const auto net = fixtures::random_model(fixtures::tiny_config(8, vocab, 3, 4), 1000 + trial, 1.5);
    const auto source = fixtures::random_source(rng, 8, 1, 4);
    FeedbackRuleSet rules;
    std::vector<FeedbackRule> accepted;
    for (std::size_t k = rng.below(4); k > 0; --k) {
      const auto kind = static_cast<FeedbackKind>(rng.below(3));
      FeedbackRule r{1 + rng.below(max_len), kind, static_cast<TokenId>(rng.below(vocab)), 1};
      if (!rules.check(r)) {
        rules.add(r);
        accepted.push_back(r);
      }
    }
    const auto want =
        oracles::enumerate_best(net, source, max_len, oracles::PlainConstraints(accepted));
    decoding::SearchOptions o;
    o.beam_size = 100000;
    o.max_length = max_len;
    o.epsilon = std::numeric_limits<double>::infinity();
    ++cases;
    with_rules += !accepted.empty();
    if (!want.found) {
      // No sequence satisfies the rules: the search must say so.
      ++infeasible;
      try {
        decoding::constrained_search(net, source, o, rules);
        if (first_failure.empty()) first_failure = fmt("case %zu: no ConstraintExhausted", trial);
      } catch (const ConstraintExhausted&) {
        ++matched;
      }
      continue;
    }
    const auto got = decoding::constrained_search(net, source, o, rules);
    if (got.tokens == want.tokens && std::abs(got.logprob - want.logprob) < 1e-9) {
      ++matched;
    } else if (first_failure.empty()) {
      first_failure = fmt("case %zu differs", trial);
    }
  }
  return {matched == cases,
          fmt("%zu/%zu cases equal the enumeration optimum (%zu with rules, %zu infeasible)%s%s",
              matched, cases, with_rules, infeasible, first_failure.empty() ? "" : "; ",
              first_failure.c_str())};
}

// ---------------------------------------------------------------- P3

Outcome constraint_soundness() {
  Rng rng(303);
  std::size_t rounds = 0, violations = 0, sessions = 0, rules_issued = 0;
  while (rounds < kSoundnessRounds) {
    auto config = fixtures::tiny_config(12, 7 + rng.below(5), 4, 6);
    config.epsilon = rng.uniform(0.2, 1.5);
    config.max_length = 10;
    config.beam_size = 1 + rng.below(5);
    auto net = fixtures::random_model(config, 5000 + sessions);
    session::SessionOptions so;
    so.round_cap = 12;
    const auto source = fixtures::random_source(rng, 12, 1, 4);
    auto s = session::Session::start({&net, nullptr}, "p3", source, so, sessions);
    ++sessions;
    while (s.status() == session::Status::Active && rounds < kSoundnessRounds) {
      const auto& shown = s.current().tokens;
      std::vector<FeedbackRule> batch;
      std::vector<bool> used(shown.size() + 1, false);
      for (std::size_t k = rng.below(4); k > 0; --k) {
        const std::size_t pos = 1 + rng.below(shown.size());
        if (used[pos]) continue;
        const auto kind = static_cast<FeedbackKind>(rng.below(3));
        TokenId tok = shown[pos - 1];
        if (kind == FeedbackKind::Substitute) tok = static_cast<TokenId>(2 + rng.below(config.target_vocab_size - 2));
        const std::vector<FeedbackRule> one{{pos, kind, tok, 0}};
        if (!s.validate(one, config.target_vocab_size).empty()) continue;
        used[pos] = true;
        batch.push_back(one[0]);
      }
      try {
        s.submit({&net, nullptr}, batch);
      } catch (const ConstraintExhausted&) {
        break;  // every token at a position is forbidden; start over
      }
      // A session stopped by the round cap shows no new partial.
      if (s.status() != session::Status::Active) break;
      ++rounds;
      rules_issued += batch.size();
      const oracles::PlainConstraints plain(s.rules().history());
      if (!plain.satisfied_by(s.current().tokens)) ++violations;
    }
  }
  return {violations == 0, fmt("%zu violations in %zu rounds over %zu sessions (%zu rules)",
                               violations, rounds, sessions, rules_issued)};
}

// ---------------------------------------------------------------- P4

Outcome reward_mapping() {
  const feedback::RewardSettings r;
  const bool exact = feedback::reward_of(FeedbackKind::Keep, r) == 0.5 &&
                     feedback::reward_of(FeedbackKind::Substitute, r) == 0.5 &&
                     feedback::reward_of(FeedbackKind::Delete, r) == -0.1;
  Rng rng(404);
  double sum = 0.0, lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kFloorDraws; ++i) {
    const double v = feedback::sample_floor(r, rng);
    sum += v;
    lo = std::min(lo, v);
  }
  const double mean = sum / static_cast<double>(kFloorDraws);
  const bool pass = exact && lo >= 0.0 && std::abs(mean - 0.1) <= kFloorMeanTolerance &&
                    r.floor_std == 0.05;
  return {pass, fmt("keep/substitute/delete %s; floor min %.4f, mean %.5f over %zu draws "
                    "(0.1 +- %.2f, std %.2f)",
                    exact ? "0.5/0.5/-0.1" : "WRONG", lo, mean, kFloorDraws, kFloorMeanTolerance,
                    r.floor_std)};
}

// ---------------------------------------------------------------- P5

Outcome update_direction() {
  Rng rng(505);
  feedback::RewardSettings zero_floor;
  zero_floor.floor_mean = 0.0;
  zero_floor.floor_std = 0.0;
  std::size_t del_ok = 0, sub_ok = 0;
  double del_min = std::numeric_limits<double>::infinity();
  double sub_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 2 * kUpdateInstances; ++i) {
    const bool del = i % 2 == 0;
    auto config = fixtures::tiny_config(10, 9, 3 + rng.below(4), 3 + rng.below(4));
    auto net = fixtures::random_model(config, 7000 + i);
    const auto source = fixtures::random_source(rng, 10, 1, 4);
    decoding::PartialTranslation p;
    p.tokens = fixtures::random_source(rng, 9, 2, 5);
    p.entropies.assign(p.tokens.size(), 2.0);
    for (std::size_t k = 1; k <= p.tokens.size(); ++k) p.uncertain_positions.push_back(k);
    const std::size_t pos = 1 + rng.below(p.tokens.size());
    const TokenId shown = p.tokens[pos - 1];
    TokenId expert = shown;
    while (expert == shown) expert = static_cast<TokenId>(4 + rng.below(5));
    const FeedbackRule rule{pos, del ? FeedbackKind::Delete : FeedbackKind::Substitute,
                            del ? shown : expert, 1};
    const std::vector<FeedbackRule> rules{rule};
    Rng floor_rng(i);
    const auto rw = feedback::build_rewards(p, rules, zero_floor, floor_rng);
    auto prefix = TokenIds(p.tokens.begin(), p.tokens.begin() + static_cast<long>(pos));
    prefix.back() = rule.token;
    const double before = net.teacher_forced_log_probs(source, prefix)[pos - 1];
    feedback::policy_gradient_update(net, source, p, rules, rw, config.interactive_lr);
    const double after = net.teacher_forced_log_probs(source, prefix)[pos - 1];
    const double change = std::exp(after) - std::exp(before);
    if (del) {
      del_ok += change < 0.0;
      del_min = std::min(del_min, -change);
    } else {
      sub_ok += change > 0.0;
      sub_min = std::min(sub_min, change);
    }
  }
  return {del_ok == kUpdateInstances && sub_ok == kUpdateInstances,
          fmt("delete lowered p in %zu/%zu (smallest drop %.2e), substitute raised p in %zu/%zu "
              "(smallest gain %.2e)",
              del_ok, kUpdateInstances, del_min, sub_ok, kUpdateInstances, sub_min)};
}

// ---------------------------------------------------------------- P6-P8

struct ModeRun {
  double bleu = 0.0;
  double rounds = 0.0;
  double clicks = 0.0;
  double target_length = 0.0;
  std::vector<double> entropy_series;
};

struct SeedRuns {
  std::uint64_t seed = 0;
  double base_bleu = 0.0;
  std::map<std::pair<oracle::Mode, std::size_t>, ModeRun> runs;  // (mode, beam)
};

fs::path run_dir(const fs::path& out, std::uint64_t seed, oracle::Mode mode, std::size_t beam) {
  return out / fmt("seed%llu_%s_beam%zu", static_cast<unsigned long long>(seed),
                   std::string(oracle::to_string(mode)).c_str(), beam);
}

// Desk settings for the synthetic task.
constexpr std::size_t kPretrainEpochs = 6;
constexpr std::size_t kPretrainBatch = 16;
constexpr double kPretrainRate = 3e-3;
constexpr std::size_t kKeepDeleteRules = 7;
constexpr std::size_t kSubstituteRules = 3;

class SyntheticExperiment {
 public:
  explicit SyntheticExperiment(fs::path out_dir) : out_dir_(std::move(out_dir)) {}

  const SeedRuns& get(std::uint64_t seed, std::size_t beam) {
    auto& entry = seeds_[seed];
    if (!entry.task) prepare(seed, entry);
    for (auto mode : {oracle::Mode::KeepDelete, oracle::Mode::PlusSubstitute}) {
      if (!entry.runs.runs.count({mode, beam})) entry.runs.runs[{mode, beam}] = adapt(entry, mode, beam);
    }
    return entry.runs;
  }

 private:
  struct Entry {
    std::optional<data::SyntheticTask> task;
    std::optional<model::Seq2Seq> base;
    SeedRuns runs;
  };

  void prepare(std::uint64_t seed, Entry& e) {
    data::SyntheticTaskSpec spec;
    spec.seed = seed;
    e.task = data::generate_synthetic_task(spec);
    model::ModelConfig c;
    c.source_vocab_size = e.task->source_vocab.size();
    c.target_vocab_size = e.task->target_vocab.size();
    c.rng_seed = seed;
    e.base.emplace(c, seed);
    data::PretrainOptions o;
    o.epochs = kPretrainEpochs;
    o.batch_size = kPretrainBatch;
    o.learning_rate = kPretrainRate;
    o.shuffle_seed = seed;
    data::pretrain(*e.base, e.task->pretrain, e.task->dev_a, o);
    e.runs.seed = seed;
    e.runs.base_bleu = eval::evaluate_model(*e.base, e.task->test_b, e.task->target_vocab).bleu;
  }

  ModeRun adapt(Entry& e, oracle::Mode mode, std::size_t beam) {
    auto net = *e.base;
    net.mutable_config().beam_size = beam;
    oracle::SimulationOptions so;
    so.oracle.mode = mode;
    so.oracle.max_rules_per_round =
        mode == oracle::Mode::KeepDelete ? kKeepDeleteRules : kSubstituteRules;
    so.seed = e.runs.seed;
    const auto report = oracle::run_simulated_corpus(net, e.task->adapt, so);
    ModeRun r;
    r.bleu = eval::evaluate_model(net, e.task->test_b, e.task->target_vocab).bleu;
    r.rounds = report.mean_rounds();
    r.clicks = report.mean_clicks();
    r.target_length = report.mean_target_length();
    const fs::path dir = run_dir(out_dir_, e.runs.seed, mode, beam);
    fs::create_directories(dir);
    std::ofstream(dir / "entropy.csv") << [&] {
      std::ostringstream s;
      oracle::write_entropy_csv(report, s);
      return s.str();
    }();
    std::ofstream(dir / "report.csv") << [&] {
      std::ostringstream s;
      oracle::write_report_csv(report, s);
      return s.str();
    }();
    std::ofstream(dir / "summary.json")
        << [&] {
             auto j = oracle::summary_json(report);
             j["bleu_test_b"] = r.bleu;
             j["base_bleu_test_b"] = e.runs.base_bleu;
             return j.dump(2);
           }()
        << '\n';
    return r;
  }

  fs::path out_dir_;
  std::map<std::uint64_t, Entry> seeds_;
};

Outcome synthetic_adaptation(SyntheticExperiment& exp) {
  double base = 0, kd = 0, sub = 0, kd_clicks = 0, sub_clicks = 0, len = 0, kd_rounds = 0,
         sub_rounds = 0;
  std::string per_seed;
  for (auto seed : kAdaptationSeeds) {
    const auto& r = exp.get(seed, 5);
    const auto& k = r.runs.at({oracle::Mode::KeepDelete, 5});
    const auto& s = r.runs.at({oracle::Mode::PlusSubstitute, 5});
    base += r.base_bleu;
    kd += k.bleu;
    sub += s.bleu;
    kd_clicks += k.clicks;
    sub_clicks += s.clicks;
    kd_rounds += k.rounds;
    sub_rounds += s.rounds;
    len += k.target_length;
    per_seed += fmt(" [seed %llu: %.2f/%.2f/%.2f]", static_cast<unsigned long long>(seed),
                    r.base_bleu, k.bleu, s.bleu);
  }
  const double n = static_cast<double>(kAdaptationSeeds.size());
  base /= n, kd /= n, sub /= n, kd_clicks /= n, sub_clicks /= n, len /= n, kd_rounds /= n,
      sub_rounds /= n;
  const bool a = kd - base >= kAdaptationGain && sub - base >= kAdaptationGain;
  const bool b = sub >= kd - kSubstituteSlack;
  const bool c = kd_clicks < len && sub_clicks < len;
  const bool d = kd_rounds <= kMaxRounds && sub_rounds <= kMaxRounds;
  return {a && b && c && d,
          fmt("BLEU base %.2f, keep-delete %.2f (%+.2f), substitute %.2f (%+.2f) [a %s, b %s]; "
              "clicks %.2f/%.2f vs length %.2f [c %s]; rounds %.2f/%.2f [d %s];",
              base, kd, kd - base, sub, sub - base, a ? "ok" : "no", b ? "ok" : "no", kd_clicks,
              sub_clicks, len, c ? "ok" : "no", kd_rounds, sub_rounds, d ? "ok" : "no") +
              per_seed};
}

std::optional<std::vector<double>> read_cumulative_entropy(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto last = line.rfind(',');
    if (last == std::string::npos) return std::nullopt;
    out.push_back(std::strtod(line.c_str() + last + 1, nullptr));
  }
  return out;
}

double variance(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

Outcome entropy_dynamics(SyntheticExperiment& exp, const fs::path& out) {
  bool pass = true;
  std::string detail;
  for (auto seed : kAdaptationSeeds) {
    exp.get(seed, 5);
    const auto series =
        read_cumulative_entropy(run_dir(out, seed, oracle::Mode::PlusSubstitute, 5) / "entropy.csv");
    if (!series || series->size() < 8) {
      pass = false;
      detail += fmt(" seed %llu: unreadable CSV;", static_cast<unsigned long long>(seed));
      continue;
    }
    bool finite = true;
    for (double v : *series) finite = finite && std::isfinite(v);
    const std::size_t q = series->size() / 4;
    const std::span<const double> all(*series);
    const double first = variance(all.subspan(0, q));
    const double last = variance(all.subspan(series->size() - q, q));
    const bool ok = finite && last < first;
    pass = pass && ok;
    detail += fmt(" seed %llu: var Q1 %.3e, Q4 %.3e%s;", static_cast<unsigned long long>(seed),
                  first, last, finite ? "" : " (non-finite)");
  }
  return {pass, "cumulative entropy (substitute, beam 5):" + detail};
}

Outcome beam_sweep(SyntheticExperiment& exp) {
  double kd2 = 0, kd5 = 0, sub2 = 0, sub5 = 0;
  for (auto seed : kBeamSeeds) {
    const auto& r2 = exp.get(seed, 2);
    kd2 += r2.runs.at({oracle::Mode::KeepDelete, 2}).bleu;
    sub2 += r2.runs.at({oracle::Mode::PlusSubstitute, 2}).bleu;
    const auto& r5 = exp.get(seed, 5);
    kd5 += r5.runs.at({oracle::Mode::KeepDelete, 5}).bleu;
    sub5 += r5.runs.at({oracle::Mode::PlusSubstitute, 5}).bleu;
  }
  const double n = static_cast<double>(kBeamSeeds.size());
  kd2 /= n, kd5 /= n, sub2 /= n, sub5 /= n;
  const bool sub_ok = sub5 >= sub2;
  const bool kd_ok = std::abs(kd5 - kd2) < kKeepDeleteBeamBand;
  return {sub_ok && kd_ok,
          fmt("substitute beam 2 %.2f -> beam 5 %.2f (%+.2f) [%s]; keep-delete %.2f -> %.2f "
              "(%+.2f, band %.1f) [%s]",
              sub2, sub5, sub5 - sub2, sub_ok ? "ok" : "no", kd2, kd5, kd5 - kd2,
              kKeepDeleteBeamBand, kd_ok ? "ok" : "no")};
}

// ---------------------------------------------------------------- P9

Outcome metric_correctness() {
  using eval::Sentence;
  std::vector<Sentence> same{{"a", "b", "c", "d", "e"}, {"der", "Hund", "bellt"}, {"x"}};
  std::vector<Sentence> longer{{"the", "heart", "of", "the", "problem", "is", "here"}};
  const auto r2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  bool identity = true;
  for (const auto* c : {&same, &longer}) {
    identity = identity && r2(eval::corpus_bleu(*c, *c)) == 100.0 && r2(eval::chrf(*c, *c)) == 100.0;
  }

  Rng rng(909);
  double worst = 0.0;
  std::size_t corpora = 0;
  const std::vector<std::string> words{"a", "b", "ab", "ba", "c", "\xC3\xA9", "a\xC3\xA9", "cab"};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<Sentence> hyp(n), ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 1 + rng.below(10); k > 0; --k) hyp[i].push_back(words[rng.below(words.size())]);
      for (std::size_t k = 1 + rng.below(10); k > 0; --k) ref[i].push_back(words[rng.below(words.size())]);
      if (rng.below(4) == 0) ref[i] = hyp[i];
    }
    worst = std::max(worst, std::abs(eval::corpus_bleu(hyp, ref) - oracles::naive_corpus_bleu(hyp, ref)));
    worst = std::max(worst, std::abs(eval::chrf(hyp, ref) - oracles::naive_chrf(hyp, ref)));
    ++corpora;
  }
  return {identity && worst < kMetricTolerance,
          fmt("identity cases %s; max |metric - oracle| %.2e over %zu random corpora (tol %.0e)",
              identity ? "100.00" : "WRONG", worst, corpora, kMetricTolerance)};
}

// ---------------------------------------------------------------- P10

Outcome greedy_equivalence() {
  Rng rng(1010);
  std::size_t equal = 0;
  for (std::size_t i = 0; i < kGreedySources; ++i) {
    auto config = fixtures::tiny_config(14, 6 + rng.below(8), 4, 6);
    config.max_length = 14;
    const auto net = fixtures::random_model(config, 11000 + i);
    const auto source = fixtures::random_source(rng, 14, 1, 6);
    auto o = decoding::search_options(net.config(), source.size(), 0);
    o.beam_size = 1;
    o.epsilon = std::numeric_limits<double>::infinity();
    const auto beam = decoding::constrained_search(net, source, o, FeedbackRuleSet{});
    const auto greedy = decoding::greedy_decode(decoding::Seq2SeqStepper(net, source), o.max_length);
    equal += beam.tokens == greedy;
  }
  return {equal == kGreedySources,
          fmt("%zu/%zu sources decode identically", equal, kGreedySources)};
}

// ---------------------------------------------------------------- P11

std::string show_partial(const json& partial) {
  std::string out;
  std::vector<bool> uncertain(partial["tokens"].size() + 1, false);
  for (const auto& p : partial["uncertain_positions"]) uncertain[p.get<std::size_t>()] = true;
  for (std::size_t i = 0; i < partial["tokens"].size(); ++i) {
    if (!out.empty()) out += ' ';
    out += partial["tokens"][i].get<std::string>();
    if (uncertain[i + 1]) out += "_" + std::to_string(i + 1);
  }
  return out;
}

std::string show_rules(const json& rules) {
  std::string out;
  for (const auto& r : rules) {
    if (!out.empty()) out += ", ";
    out += r["kind"].get<std::string>() + "(" + std::to_string(r["position"].get<std::size_t>());
    if (r["kind"] != "keep") out += ": " + r["token"].get<std::string>();
    out += ")";
  }
  return out;
}

Outcome api_conformance(const Settings& settings) {
  auto world = fixtures::toy_world();
  auto& bundle = world.bundle;
  const fs::path log_path = settings.out_dir / "p11_protocol.jsonl";
  fs::remove(log_path);
  server::ServiceOptions options;
  options.log_path = log_path;
  server::SessionService service(bundle, options);
  server::HttpServer http(service);
  const int port = http.bind("127.0.0.1", 0);
  http.start();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);

  std::ofstream records(settings.out_dir / "p11_responses.jsonl");
  std::ofstream trace(settings.out_dir / "p11_trace.txt");
  std::vector<std::string> problems;
  std::size_t requests = 0;

  auto expect = [&](const httplib::Result& res, int status, const char* schema, const std::string& what) {
    ++requests;
    if (!res) {
      problems.push_back(what + ": no response");
      return json();
    }
    if (res->status != status) {
      problems.push_back(what + ": status " + std::to_string(res->status) + ", expected " +
                         std::to_string(status));
    }
    if (res->status == 304) return json();
    const json body = json::parse(res->body, nullptr, false);
    if (body.is_discarded()) {
      problems.push_back(what + ": body is not JSON");
      return json();
    }
    if (schema) records << json{{"schema", schema}, {"body", body}}.dump() << '\n';
    return body;
  };
  auto post = [&](const std::string& path, const json& body) {
    return client.Post(path, body.dump(), "application/json");
  };

  expect(client.Get("/api/health"), 200, "health.json", "health");

  // Scripted sessions: a simulated translator drives each one to acceptance.
  std::size_t accepted = 0, aborted = 0, rounds_total = 0;
  std::map<oracle::Mode, std::size_t> accepted_by_mode;
  const std::size_t sentences = 4;
  for (std::size_t i = 0; i < sentences; ++i) {
    const auto& pair = world.task.test_b.pairs[i];
    const auto mode = i % 2 ? oracle::Mode::PlusSubstitute : oracle::Mode::KeepDelete;
    const auto source_words = bundle.source_vocab.decode(pair.source);
    const auto ref_words = bundle.target_vocab.decode(pair.target);
    std::string source_text, ref_text;
    for (const auto& w : source_words) source_text += (source_text.empty() ? "" : " ") + w;
    for (const auto& w : ref_words) ref_text += (ref_text.empty() ? "" : " ") + w;
    trace << "sentence " << i << " (" << oracle::to_string(mode) << ")\n  source: " << source_text
          << "\n  reference: " << ref_text << '\n';

    // Text form for even sentences, token arrays for odd ones.
    const json create = i % 2 ? json{{"source", source_words}} : json{{"source", source_text}};
    const json created = expect(post("/api/sessions", create), 201, "session_created.json", "create");
    if (!created.contains("session_id")) continue;
    const std::string id = created["session_id"];
    json partial = created["partial"];
    oracle::OracleConfig oc;
    oc.mode = mode;
    oc.max_rules_per_round = 3;
    feedback::FeedbackRuleSet mirror;  // the client's view of Required positions
    for (int round = 1; round <= 12; ++round) {
      decoding::PartialTranslation shown;
      for (const auto& t : partial["tokens"]) shown.tokens.push_back(*bundle.target_vocab.find(t.get<std::string>()));
      for (const auto& p : partial["uncertain_positions"]) shown.uncertain_positions.push_back(p);
      shown.complete = partial["complete"];
      shown.truncated = partial["truncated"];
      const auto decision = oracle::simulate_feedback(shown, pair.target, oc, &mirror);
      if (decision.accept) {
        trace << "  round " << round << ": " << show_partial(partial) << "  -> accepted\n";
        const json acc = expect(post("/api/sessions/" + id + "/accept", json::object()), 200,
                                "accept_response.json", "accept");
        if (acc.contains("rounds")) {
          ++accepted;
          ++accepted_by_mode[mode];
          rounds_total += acc["rounds"].get<std::size_t>();
          if (acc["rounds"] != round) problems.push_back("accept: rounds does not match history");
          auto last = partial["tokens"];
          if (!last.empty() && last.back() == bundle.target_vocab.token(Vocabulary::kEos)) {
            last.erase(last.size() - 1);
          }
          if (acc["translation"] != last) {
            problems.push_back("accept: translation is not the last partial");
          }
        }
        break;
      }
      json rules = json::array();
      for (const auto& r : decision.rules) {
        rules.push_back({{"position", r.position},
                         {"kind", std::string(feedback::to_string(r.kind))},
                         {"token", bundle.target_vocab.token(r.token)}});
        mirror.add(r);
      }
      trace << "  round " << round << ": " << show_partial(partial) << "  -> " << show_rules(rules)
            << '\n';
      const json fb = expect(post("/api/sessions/" + id + "/feedback", {{"rules", rules}}), 200,
                             "feedback_response.json", "feedback");
      if (!fb.contains("partial")) break;
      partial = fb["partial"];
      if (fb["status"] == "aborted") {
        trace << "  round cap reached -> aborted\n";
        ++aborted;
        break;
      }
    }

    const auto state = client.Get("/api/sessions/" + id);
    const json st = expect(state, 200, "session_state.json", "session state");
    if (state && st.contains("history")) {
      const std::string etag = state->get_header_value("ETag");
      expect(client.Get("/api/sessions/" + id, httplib::Headers{{"If-None-Match", etag}}), 304,
             nullptr, "conditional get");
      if (st["status"] == "accepted" && st["history"].size() != st["round"].get<std::size_t>()) {
        problems.push_back("session state: history length differs from rounds");
      }
    }
    // Terminal sessions refuse further input.
    expect(post("/api/sessions/" + id + "/feedback", {{"rules", json::array()}}), 409,
           "error.json", "feedback after accept");
    expect(post("/api/sessions/" + id + "/accept", json::object()), 409, "error.json",
           "double accept");
  }

  // Error contract.
  expect(client.Post("/api/sessions", "{not json", "application/json"), 400, "error.json",
         "malformed create");
  expect(post("/api/sessions", {{"source", "   "}}), 422, "error.json", "empty source");
  expect(client.Get("/api/sessions/nope"), 404, "error.json", "unknown session");
  expect(post("/api/sessions/nope/accept", json::object()), 404, "error.json", "unknown accept");
  const json fresh = expect(post("/api/sessions", {{"source", "s001 s002 s003"}}), 201,
                            "session_created.json", "create for errors");
  if (fresh.contains("session_id")) {
    const std::string id = fresh["session_id"];
    std::size_t certain = 0;
    const auto& pt = fresh["partial"];
    std::vector<bool> unc(pt["tokens"].size() + 1, false);
    for (const auto& p : pt["uncertain_positions"]) unc[p.get<std::size_t>()] = true;
    for (std::size_t k = 1; k < unc.size(); ++k) {
      if (!unc[k]) {
        certain = k;
        break;
      }
    }
    json bad = json::array({{{"position", 1}, {"kind", "substitute"}},
                            {{"position", 1}, {"kind", "rewrite"}},
                            {{"position", 99}, {"kind", "delete"}}});
    if (certain) bad.push_back({{"position", certain}, {"kind", "keep"}});
    const json rejected = expect(post("/api/sessions/" + id + "/feedback", {{"rules", bad}}), 422,
                                 "error.json", "invalid rules");
    if (rejected.contains("diagnostics") && rejected["diagnostics"].size() != bad.size()) {
      problems.push_back("invalid rules: expected one diagnostic per rule");
    }
    expect(client.Post("/api/sessions/" + id + "/feedback", "[]", "application/json"), 400,
           "error.json", "malformed feedback");
  }
  http.stop();
  service.shutdown();
  records.close();
  trace.close();

  std::size_t log_lines = 0;
  {
    std::ifstream in(log_path);
    for (std::string line; std::getline(in, line);) {
      if (json::parse(line, nullptr, false).is_discarded()) problems.push_back("log line is not JSON");
      ++log_lines;
    }
  }

  const std::string cmd = settings.python + " " + settings.validator.string() + " " +
                          settings.schema_dir.string() + " " +
                          (settings.out_dir / "p11_responses.jsonl").string() + " > " +
                          (settings.out_dir / "p11_schema_check.txt").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  std::string schema_line;
  {
    std::ifstream in(settings.out_dir / "p11_schema_check.txt");
    for (std::string line; std::getline(in, line);) schema_line = line;
  }
  if (rc != 0) problems.push_back("schema validation failed: " + schema_line);
  if (accepted + aborted != sentences) problems.push_back("a scripted session did not terminate");
  if (accepted_by_mode[oracle::Mode::KeepDelete] == 0 || accepted_by_mode[oracle::Mode::PlusSubstitute] == 0) {
    problems.push_back("no accepted session for one of the feedback modes");
  }

  std::string detail = fmt("%zu requests, %zu/%zu sessions accepted in %zu rounds, %zu hit the round "
                           "cap, %zu log records; %s; trace in %s",
                           requests, accepted, sentences, rounds_total, aborted, log_lines,
                           schema_line.c_str(), (settings.out_dir / "p11_trace.txt").c_str());
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ipnmt acceptance suite"};
  Settings settings;
  std::vector<std::string> only;
  std::string out_dir = settings.out_dir.string();
  std::string schema_dir = IPNMT_SCHEMA_DIR;
  std::string validator = IPNMT_SCHEMA_VALIDATOR;
  app.add_option("--only", only, "criteria to run, e.g. P1,P9")->delimiter(',');
  app.add_option("--out-dir", out_dir, "where CSVs, logs and traces go");
  app.add_option("--schema-dir", schema_dir);
  app.add_option("--validator", validator);
  app.add_option("--python", settings.python);
  CLI11_PARSE(app, argc, argv);
  settings.out_dir = out_dir;
  settings.schema_dir = schema_dir;
  settings.validator = validator;
  fs::create_directories(settings.out_dir);

  SyntheticExperiment synthetic(settings.out_dir);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"P1", gradients},
      {"P2", decoding_oracle},
      {"P3", constraint_soundness},
      {"P4", reward_mapping},
      {"P5", update_direction},
      {"P6", [&] { return synthetic_adaptation(synthetic); }},
      {"P7", [&] { return entropy_dynamics(synthetic, settings.out_dir); }},
      {"P8", [&] { return beam_sweep(synthetic); }},
      {"P9", metric_correctness},
      {"P10", greedy_equivalence},
      {"P11", [&] { return api_conformance(settings); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << name << (name.size() < 3 ? "  " : " ") << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << fmt("  (%.1fs)", seconds_since(t0)) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
