// Serial reference kernels against their OpenMP variants, and the batch
// gradient under both policies.

#include <benchmark/benchmark.h>

#include <vector>

#include "ipnmt/data/pretrain.hpp"
#include "ipnmt/data/synthetic.hpp"
#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/nn/kernels.hpp"
#include "ipnmt/rng.hpp"

using namespace ipnmt;
namespace k = ipnmt::nn::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Kernel>
void BM_vec_mat(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_values(n, 1);
  const auto w = random_values(n * n, 2);
  std::vector<double> y(n);
  for (auto _ : state) {
    Kernel(x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

template <auto Kernel>
void BM_mat_vec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto w = random_values(n * n, 3);
  const auto dy = random_values(n, 4);
  std::vector<double> dx(n);
  for (auto _ : state) {
    Kernel(w, dy, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

template <auto Kernel>
void BM_outer_add(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_values(n, 5);
  const auto dy = random_values(n, 6);
  std::vector<double> dw(n * n);
  for (auto _ : state) {
    Kernel(x, dy, dw);
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

struct GradientFixture {
  data::SyntheticTask task;
  model::Seq2Seq network;
  std::vector<const data::SentencePair*> batch;

  GradientFixture()
      : task(data::generate_synthetic_task({})), network(config(task), 1) {
    for (std::size_t i = 0; i < 64; ++i) batch.push_back(&task.pretrain.pairs[i]);
  }

  static model::ModelConfig config(const data::SyntheticTask& t) {
    model::ModelConfig c;
    c.source_vocab_size = t.source_vocab.size();
    c.target_vocab_size = t.target_vocab.size();
    return c;
  }
};

GradientFixture& gradient_fixture() {
  static GradientFixture f;
  return f;
}

void BM_batch_gradient(benchmark::State& state) {
  auto policy = state.range(0) ? k::Policy::Parallel : k::Policy::Serial;
  auto& f = gradient_fixture();
  for (auto _ : state) {
    const auto loss = data::batch_gradient(f.network, f.batch, policy);
    benchmark::DoNotOptimize(loss.nll);
  }
  state.SetLabel(policy == k::Policy::Parallel ? "parallel" : "serial");
  state.counters["threads"] = k::max_threads();
}

}  // namespace

#define KERNEL_SIZES ->RangeMultiplier(4)->Range(64, 1024)

BENCHMARK(BM_vec_mat<k::serial::vec_mat>) KERNEL_SIZES;
BENCHMARK(BM_vec_mat<k::parallel::vec_mat>) KERNEL_SIZES;
BENCHMARK(BM_mat_vec<k::serial::mat_vec>) KERNEL_SIZES;
BENCHMARK(BM_mat_vec<k::parallel::mat_vec>) KERNEL_SIZES;
BENCHMARK(BM_outer_add<k::serial::outer_add>) KERNEL_SIZES;
BENCHMARK(BM_outer_add<k::parallel::outer_add>) KERNEL_SIZES;
BENCHMARK(BM_batch_gradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
