#include "ipnmt/cli/cli.hpp"

#include <csignal>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>

#include "ipnmt/data/corpus.hpp"
#include "ipnmt/data/pretrain.hpp"
#include "ipnmt/data/synthetic.hpp"
#include "ipnmt/errors.hpp"
#include "ipnmt/eval/metrics.hpp"
#include "ipnmt/model/checkpoint.hpp"
#include "ipnmt/oracle/oracle.hpp"
#include "ipnmt/server/server.hpp"

namespace ipnmt::cli {

namespace fs = std::filesystem;

namespace {

// Settings a loaded model may have overridden from the command line.
struct ModelOverrides {
  std::optional<double> epsilon;
  std::optional<double> delta;
  std::optional<std::size_t> beam;
  std::optional<std::size_t> max_length;
  std::optional<double> interactive_lr;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--epsilon", epsilon, "entropy threshold");
    cmd->add_option("--delta", delta, "relative entropy jump threshold");
    cmd->add_option("--beam", beam, "beam size");
    cmd->add_option("--max-length", max_length, "maximum target length");
    cmd->add_option("--interactive-lr", interactive_lr, "learning rate of feedback updates");
  }

  void apply(model::ModelConfig& c) const {
    if (epsilon) c.epsilon = *epsilon;
    if (delta) c.delta = *delta;
    if (beam) c.beam_size = *beam;
    if (max_length) c.max_length = *max_length;
    if (interactive_lr) c.interactive_lr = *interactive_lr;
    c.validate();
  }
};

model::ModelBundle load_model(const fs::path& path, const ModelOverrides& overrides) {
  auto bundle = model::load_checkpoint(path);
  overrides.apply(bundle.network.mutable_config());
  return bundle;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------- generate-task

struct GenerateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  data::SyntheticTaskSpec spec;
  if (!a.spec.empty()) spec = data::load_task_spec(a.spec);
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  const auto task = data::generate_synthetic_task(spec);
  ensure_dir(a.out);
  data::write_synthetic_task(task, a.out);
  open_out(fs::path(a.out) / "task.json") << nlohmann::json(spec).dump(2) << '\n';
  out << "wrote task to " << a.out << " (" << task.pretrain.size() << " pretraining pairs, "
      << task.adapt.size() << " adaptation pairs)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  std::string train_src, train_tgt, dev_src, dev_tgt;
  std::string src_vocab, tgt_vocab;
  std::size_t vocab_cap = 0;
  std::string out, log;
  std::size_t embedding_dim = 32, hidden_dim = 64;
  data::PretrainOptions train;
  ModelOverrides model;
  std::uint64_t seed = 1;
  bool serial = false;
};

int cmd_pretrain(const PretrainArgs& a, std::ostream& out) {
  const auto src_vocab =
      a.src_vocab.empty() ? data::build_vocab(a.train_src, a.vocab_cap)
                          : model::Vocabulary::load(a.src_vocab);
  const auto tgt_vocab =
      a.tgt_vocab.empty() ? data::build_vocab(a.train_tgt, a.vocab_cap)
                          : model::Vocabulary::load(a.tgt_vocab);
  model::ModelConfig config;
  config.embedding_dim = a.embedding_dim;
  config.hidden_dim = a.hidden_dim;
  config.source_vocab_size = src_vocab.size();
  config.target_vocab_size = tgt_vocab.size();
  config.rng_seed = a.seed;
  a.model.apply(config);

  const auto train = data::load_corpus(a.train_src, a.train_tgt, src_vocab, tgt_vocab,
                                       config.max_length);
  const auto dev =
      data::load_corpus(a.dev_src, a.dev_tgt, src_vocab, tgt_vocab, config.max_length);

  model::ModelBundle bundle{src_vocab, tgt_vocab, model::Seq2Seq(config, a.seed)};
  auto options = a.train;
  options.shuffle_seed = a.seed;
  options.policy = a.serial ? nn::kernels::Policy::Serial : nn::kernels::Policy::Parallel;
  const auto result = data::pretrain(bundle.network, train, dev, options, [&](const auto& e) {
    out << "epoch " << e.epoch << " lr " << e.learning_rate << " train_loss " << e.train_loss
        << " dev_ppl " << e.dev_perplexity << (e.best ? " *" : "") << '\n';
  });
  model::save_checkpoint(bundle, a.out);
  if (!a.log.empty()) {
    auto log = open_out(a.log);
    data::write_training_log(result, log);
  }
  out << "best epoch " << result.best_epoch << " dev_ppl " << result.best_dev_perplexity
      << ", checkpoint " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint, src, tgt;
  ModelOverrides model;
  bool json = false;
};

nlohmann::json rounded(const eval::MetricReport& r) {
  return {{"bleu", round2(r.bleu)}, {"chrf", round2(r.chrf)}, {"sentences", r.sentences}};
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto bundle = load_model(a.checkpoint, a.model);
  const auto corpus = data::load_corpus(a.src, a.tgt, bundle.source_vocab, bundle.target_vocab,
                                        bundle.network.config().max_length);
  const auto report = eval::evaluate_model(bundle.network, corpus, bundle.target_vocab);
  if (a.json) {
    out << rounded(report).dump() << '\n';
  } else {
    out << "BLEU " << fixed2(report.bleu) << "\nchrF " << fixed2(report.chrf) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string checkpoint, src, tgt;
  std::string test_src, test_tgt;
  std::string mode = "plus-substitute";
  std::size_t max_rules = 7;
  std::vector<std::size_t> beam_sweep;
  std::uint64_t seed = 1;
  int round_cap = 10;
  std::string out_dir;
  ModelOverrides model;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  oracle::SimulationOptions options;
  options.oracle.mode = oracle::parse_mode(a.mode);
  options.oracle.max_rules_per_round = a.max_rules;
  options.oracle.validate();
  options.session.round_cap = a.round_cap;
  options.seed = a.seed;
  if (a.beam_sweep.size() > 0 && a.model.beam) {
    throw ConfigError("--beam and --beam-sweep are mutually exclusive");
  }
  if (a.test_src.empty() != a.test_tgt.empty()) {
    throw ConfigError("--test-src and --test-tgt must be given together");
  }

  std::vector<std::optional<std::size_t>> beams;
  if (a.beam_sweep.empty()) {
    beams.push_back(a.model.beam);
  } else {
    for (std::size_t k : a.beam_sweep) beams.emplace_back(k);
  }
  ensure_dir(a.out_dir);

  std::ostringstream sweep;
  sweep << "beam,mean_rounds,mean_clicks,mean_target_length,bleu_before,bleu_after\n";
  for (const auto& beam : beams) {
    ModelOverrides overrides = a.model;
    overrides.beam = beam;
    auto bundle = load_model(a.checkpoint, overrides);
    const auto& config = bundle.network.config();
    const auto corpus = data::load_corpus(a.src, a.tgt, bundle.source_vocab,
                                          bundle.target_vocab, config.max_length);
    std::optional<data::ParallelCorpus> test;
    if (!a.test_src.empty()) {
      test = data::load_corpus(a.test_src, a.test_tgt, bundle.source_vocab, bundle.target_vocab,
                               config.max_length);
    }
    const fs::path dir = a.beam_sweep.empty()
                             ? fs::path(a.out_dir)
                             : fs::path(a.out_dir) / ("beam_" + std::to_string(config.beam_size));
    ensure_dir(dir);

    std::optional<eval::MetricReport> before, after;
    if (test) before = eval::evaluate_model(bundle.network, *test, bundle.target_vocab);
    const auto report = oracle::run_simulated_corpus(bundle.network, corpus, options);
    if (test) after = eval::evaluate_model(bundle.network, *test, bundle.target_vocab);

    {
      auto f = open_out(dir / "report.csv");
      oracle::write_report_csv(report, f);
    }
    {
      auto f = open_out(dir / "entropy.csv");
      oracle::write_entropy_csv(report, f);
    }
    auto summary = oracle::summary_json(report);
    summary["mode"] = std::string(oracle::to_string(options.oracle.mode));
    summary["beam"] = config.beam_size;
    summary["seed"] = a.seed;
    if (test) {
      summary["before"] = rounded(*before);
      summary["after"] = rounded(*after);
    }
    open_out(dir / "summary.json") << summary.dump(2) << '\n';
    model::save_checkpoint(bundle, dir / "adapted.ckpt");

    out << "beam " << config.beam_size << ": " << report.sentences.size() << " sentences, "
        << fixed2(report.mean_rounds()) << " rounds, " << fixed2(report.mean_clicks())
        << " clicks, " << fixed2(report.mean_target_length()) << " target tokens";
    if (test) out << ", BLEU " << fixed2(before->bleu) << " -> " << fixed2(after->bleu);
    out << '\n';
    sweep << config.beam_size << ',' << report.mean_rounds() << ',' << report.mean_clicks()
          << ',' << report.mean_target_length() << ','
          << (test ? fixed2(before->bleu) : "") << ',' << (test ? fixed2(after->bleu) : "")
          << '\n';
  }
  if (!a.beam_sweep.empty()) open_out(fs::path(a.out_dir) / "sweep.csv") << sweep.str();
  return kExitOk;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string addr = "127.0.0.1:8080";
  std::string checkpoint;
  std::string log;
  std::uint64_t seed = 1;
  int round_cap = 10;
  ModelOverrides model;
};

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("--addr must be host:port");
  const std::string host = addr.substr(0, colon);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
  }
  if (host.empty() || port < 0 || port > 65535) throw ConfigError("bad --addr " + addr);
  return {host, port};
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  const auto [host, port] = split_addr(a.addr);
  auto bundle = load_model(a.checkpoint, a.model);
  server::ServiceOptions options;
  options.seed = a.seed;
  options.session.round_cap = a.round_cap;
  if (!a.log.empty()) options.log_path = a.log;

  // Block the stop signals before any thread exists so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  server::SessionService service(bundle, options);
  server::HttpServer http(service);
  const int bound = http.bind(host, port);
  http.start();
  out << "listening on " << host << ':' << bound << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  http.stop();
  service.shutdown();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  out << "stopped" << std::endl;
  return kExitOk;
}

bool is_usage_error(const Error& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
         dynamic_cast<const FormatError*>(&e) || dynamic_cast<const VocabularyError*>(&e) ||
         dynamic_cast<const AlignmentError*>(&e);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive-predictive NMT workbench"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file; [command] sections hold flag values");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-task", "Write a synthetic two-domain task");
  g->add_option("--spec", gen.spec, "task spec JSON")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--seed", gen.seed);

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Supervised pretraining");
  p->add_option("--train-src", pre.train_src)->required()->check(CLI::ExistingFile);
  p->add_option("--train-tgt", pre.train_tgt)->required()->check(CLI::ExistingFile);
  p->add_option("--dev-src", pre.dev_src)->required()->check(CLI::ExistingFile);
  p->add_option("--dev-tgt", pre.dev_tgt)->required()->check(CLI::ExistingFile);
  p->add_option("--src-vocab", pre.src_vocab)->check(CLI::ExistingFile);
  p->add_option("--tgt-vocab", pre.tgt_vocab)->check(CLI::ExistingFile);
  p->add_option("--vocab-cap", pre.vocab_cap, "0 keeps every training token");
  p->add_option("--out", pre.out, "checkpoint path")->required();
  p->add_option("--log", pre.log, "training log CSV");
  p->add_option("--embedding-dim", pre.embedding_dim);
  p->add_option("--hidden-dim", pre.hidden_dim);
  p->add_option("--epochs", pre.train.epochs);
  p->add_option("--batch-size", pre.train.batch_size);
  p->add_option("--learning-rate", pre.train.learning_rate);
  p->add_option("--decay-start", pre.train.decay_start_epoch);
  p->add_option("--clip-norm", pre.train.clip_norm);
  p->add_option("--seed", pre.seed);
  p->add_flag("--serial", pre.serial, "use the serial reference kernels");
  pre.model.add_to(p);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Greedy-decode a test set and score it");
  e->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--src", ev.src)->required()->check(CLI::ExistingFile);
  e->add_option("--tgt", ev.tgt)->required()->check(CLI::ExistingFile);
  e->add_flag("--json", ev.json);
  ev.model.add_to(e);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Adapt a model with simulated feedback");
  s->add_option("--checkpoint", sim.checkpoint)->required()->check(CLI::ExistingFile);
  s->add_option("--src", sim.src)->required()->check(CLI::ExistingFile);
  s->add_option("--tgt", sim.tgt)->required()->check(CLI::ExistingFile);
  s->add_option("--test-src", sim.test_src)->check(CLI::ExistingFile);
  s->add_option("--test-tgt", sim.test_tgt)->check(CLI::ExistingFile);
  s->add_option("--mode", sim.mode, "keep-delete or substitute");
  s->add_option("--max-rules", sim.max_rules, "feedback rules per round");
  s->add_option("--beam-sweep", sim.beam_sweep, "beam sizes, one run each")->delimiter(',');
  s->add_option("--seed", sim.seed);
  s->add_option("--round-cap", sim.round_cap);
  s->add_option("--out-dir", sim.out_dir)->required();
  sim.model.add_to(s);

  ServeArgs srv;
  auto* v = app.add_subcommand("serve", "Serve the session API over HTTP");
  v->add_option("--addr", srv.addr, "host:port");
  v->add_option("--checkpoint", srv.checkpoint)->required()->check(CLI::ExistingFile);
  v->add_option("--log", srv.log, "protocol log (JSON lines)");
  v->add_option("--seed", srv.seed);
  v->add_option("--round-cap", srv.round_cap);
  srv.model.add_to(v);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, out);
    if (p->parsed()) return cmd_pretrain(pre, out);
    if (e->parsed()) return cmd_evaluate(ev, out);
    if (s->parsed()) return cmd_simulate(sim, out);
    if (v->parsed()) return cmd_serve(srv, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return is_usage_error(ex) ? kExitUsage : kExitFailure;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ipnmt::cli
