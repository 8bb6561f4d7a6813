#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "ipnmt/data/corpus.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/nn/kernels.hpp"

namespace ipnmt::data {

struct PretrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t decay_start_epoch = 5;  // first epoch whose dev perplexity can halve the rate
  double clip_norm = 5.0;
  std::uint64_t shuffle_seed = 1;
  nn::kernels::Policy policy = nn::kernels::Policy::Parallel;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double learning_rate = 0.0;  // rate used during this epoch
  double train_loss = 0.0;     // mean per-token negative log-likelihood
  double dev_perplexity = 0.0;
  bool best = false;
};

struct PretrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_perplexity = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Rate for the epoch after `epoch`: halved when epoch >= decay_start and the
// dev perplexity rose against the previous epoch.
double next_learning_rate(std::size_t epoch, double rate, double dev_perplexity,
                          double previous_dev_perplexity, std::size_t decay_start);

struct BatchLoss {
  double nll = 0.0;  // summed over tokens
  std::size_t tokens = 0;
};

// Teacher-forced cross-entropy gradient of a batch (targets + EOS), written
// into Parameter::gradient as the per-token mean. Serial accumulates one
// sentence after another; Parallel splits the batch into fixed chunks with
// private gradient buffers and sums them in chunk order.
BatchLoss batch_gradient(model::Seq2Seq& network, std::span<const SentencePair* const> batch,
                         nn::kernels::Policy policy);

// Mini-batch Adam training with global-norm clipping and the halving
// schedule. The network ends with the parameters of the best dev epoch.
// Throws NumericError naming epoch and step when the loss diverges.
PretrainResult pretrain(model::Seq2Seq& network, const ParallelCorpus& train,
                        const ParallelCorpus& dev, const PretrainOptions& options,
                        const EpochCallback& on_epoch = {});

void write_training_log(const PretrainResult& result, std::ostream& out);

}  // namespace ipnmt::data
