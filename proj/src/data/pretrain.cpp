#include "ipnmt/data/pretrain.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "ipnmt/errors.hpp"
#include "ipnmt/eval/metrics.hpp"
#include "ipnmt/nn/ops.hpp"
#include "ipnmt/rng.hpp"

#ifdef IPNMT_HAVE_OPENMP
#include <omp.h>
#endif

namespace ipnmt::data {

namespace {

constexpr std::size_t kChunks = 8;

TokenIds with_eos(const TokenIds& target) {
  TokenIds out = target;
  out.push_back(model::Vocabulary::kEos);
  return out;
}

// Runs one sentence on a fresh tape and returns its summed NLL; parameter
// gradients are handed to `sink`.
template <class Sink>
double sentence_gradient(model::Seq2Seq& network, const SentencePair& pair, Sink&& sink) {
  const TokenIds actions = with_eos(pair.target);
  nn::Tape tape;
  const auto terms = network.log_prob_terms(tape, pair.source, actions);
  const std::vector<double> minus_one(terms.size(), -1.0);
  const nn::Var loss = nn::weighted_sum(terms, minus_one);
  tape.backward(loss);
  sink(tape);
  return loss.value()[0];
}

}  // namespace

double next_learning_rate(std::size_t epoch, double rate, double dev_perplexity,
                          double previous_dev_perplexity, std::size_t decay_start) {
  if (epoch >= decay_start && dev_perplexity > previous_dev_perplexity) return rate / 2;
  return rate;
}

BatchLoss batch_gradient(model::Seq2Seq& network, std::span<const SentencePair* const> batch,
                         nn::kernels::Policy policy) {
  auto params = network.params().all();
  for (auto* p : params) p->zero_grad();
  BatchLoss out;
  for (const auto* pair : batch) out.tokens += pair->target.size() + 1;
  if (batch.empty()) return out;

  if (policy == nn::kernels::Policy::Serial) {
    for (const auto* pair : batch) {
      out.nll += sentence_gradient(network, *pair,
                                   [](nn::Tape& t) { t.accumulate_parameter_gradients(); });
    }
  } else {
    std::unordered_map<const nn::Parameter*, std::size_t> index;
    for (std::size_t i = 0; i < params.size(); ++i) index[params[i]] = i;
    const std::size_t chunks = std::min(kChunks, batch.size());
    std::vector<std::vector<nn::Tensor>> grads(chunks);
    std::vector<double> nll(chunks, 0.0);
    const auto n = static_cast<long>(chunks);
#ifdef IPNMT_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long c = 0; c < n; ++c) {
      auto& buf = grads[static_cast<std::size_t>(c)];
      buf.reserve(params.size());
      for (const auto* p : params) buf.push_back(nn::Tensor::zeros_like(p->value));
      const std::size_t lo = batch.size() * static_cast<std::size_t>(c) / chunks;
      const std::size_t hi = batch.size() * static_cast<std::size_t>(c + 1) / chunks;
      for (std::size_t i = lo; i < hi; ++i) {
        nll[static_cast<std::size_t>(c)] +=
            sentence_gradient(network, *batch[i], [&](nn::Tape& t) {
              t.for_each_parameter_gradient([&](nn::Parameter& p, const nn::Tensor& g) {
                auto dst = buf[index.at(&p)].values();
                const auto src = g.values();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
              });
            });
      }
    }
    for (std::size_t c = 0; c < chunks; ++c) {
      out.nll += nll[c];
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = params[i]->gradient.values();
        const auto src = grads[c][i].values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  const double scale = 1.0 / static_cast<double>(out.tokens);
  for (auto* p : params) {
    for (double& g : p->gradient.values()) g *= scale;
  }
  return out;
}

PretrainResult pretrain(model::Seq2Seq& network, const ParallelCorpus& train,
                        const ParallelCorpus& dev, const PretrainOptions& options,
                        const EpochCallback& on_epoch) {
  if (train.empty()) throw InputError("pretrain: empty training corpus");
  if (dev.empty()) throw InputError("pretrain: empty dev corpus");
  if (options.batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");

  auto params = network.params().all();
  for (auto* p : params) p->reset_optimizer();
  std::vector<nn::Tensor> best_values;

  PretrainResult result;
  Rng rng(options.shuffle_seed);
  std::vector<const SentencePair*> order;
  for (const auto& pair : train.pairs) order.push_back(&pair);

  double rate = options.learning_rate;
  double previous_ppl = 0.0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double nll = 0.0;
    std::size_t tokens = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size, ++step) {
      const std::size_t len = std::min(options.batch_size, order.size() - start);
      const std::span<const SentencePair* const> batch(order.data() + start, len);
      const BatchLoss loss = batch_gradient(network, batch, options.policy);
      if (!std::isfinite(loss.nll)) {
        throw NumericError("pretrain diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1));
      }
      nll += loss.nll;
      tokens += loss.tokens;
      if (options.clip_norm > 0) nn::clip_global_norm(params, options.clip_norm);
      for (auto* p : params) nn::adam_update(*p, rate);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.learning_rate = rate;
    entry.train_loss = nll / static_cast<double>(tokens);
    entry.dev_perplexity = eval::perplexity(network, dev);
    if (!std::isfinite(entry.dev_perplexity)) {
      throw NumericError("pretrain: non-finite dev perplexity after epoch " +
                         std::to_string(epoch));
    }
    if (result.log.empty() || entry.dev_perplexity < result.best_dev_perplexity) {
      entry.best = true;
      result.best_epoch = epoch;
      result.best_dev_perplexity = entry.dev_perplexity;
      best_values.clear();
      for (const auto* p : params) best_values.push_back(p->value);
    }
    if (epoch > 1) {
      rate = next_learning_rate(epoch, rate, entry.dev_perplexity, previous_ppl,
                                options.decay_start_epoch);
    }
    previous_ppl = entry.dev_perplexity;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  for (auto* p : params) p->reset_optimizer();
  return result;
}

void write_training_log(const PretrainResult& result, std::ostream& out) {
  out << "epoch,learning_rate,train_loss,dev_perplexity,best\n";
  char buf[160];
  for (const auto& e : result.log) {
    std::snprintf(buf, sizeof buf, "%zu,%.8g,%.8f,%.8f,%d\n", e.epoch, e.learning_rate,
                  e.train_loss, e.dev_perplexity, e.best ? 1 : 0);
    out << buf;
  }
}

}  // namespace ipnmt::data
