// Serial vs OpenMP kernels, and serial vs parallel experiment jobs.

#include <benchmark/benchmark.h>

#include <vector>

#include "tlerc/harness.hpp"
#include "tlerc/kernels.hpp"
#include "tlerc/rng.hpp"

using namespace tlerc;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto W = random_values(n * n, 1), x = random_values(n, 2), b = random_values(n, 3);
  std::vector<double> y(n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::matvec_parallel(W, n, n, x, b, y);
    else
      kernels::matvec_serial(W, n, n, x, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

template <bool Parallel>
void BM_matvec_transposed(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto W = random_values(n * n, 1), g = random_values(n, 2);
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::matvec_transposed_acc_parallel(W, n, n, g, out);
    else
      kernels::matvec_transposed_acc_serial(W, n, n, g, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

template <bool Parallel>
void BM_outer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = random_values(n, 1), x = random_values(n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::outer_acc_parallel(g, x, out);
    else
      kernels::outer_acc_serial(g, x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

BENCHMARK(BM_matvec<false>)->Arg(16)->Arg(128)->Arg(512);
BENCHMARK(BM_matvec<true>)->Arg(16)->Arg(128)->Arg(512);
BENCHMARK(BM_matvec_transposed<false>)->Arg(16)->Arg(128)->Arg(512);
BENCHMARK(BM_matvec_transposed<true>)->Arg(16)->Arg(128)->Arg(512);
BENCHMARK(BM_outer<false>)->Arg(16)->Arg(128)->Arg(512);
BENCHMARK(BM_outer<true>)->Arg(16)->Arg(128)->Arg(512);

struct SmallExperiment {
  TargetData data;
  ExperimentSpec spec;

  SmallExperiment() {
    SyntheticConfig sc;
    sc.n_conversations = 20;
    sc.turns = 4;
    sc.vocab_size = 30;
    data.train = generate_synthetic(sc);
    sc.n_conversations = 6;
    sc.seed = 2;
    sc.id_prefix = "v";
    data.val = generate_synthetic(sc);
    data.test = data.val;
    data.vocab = build_vocab(data.train, 1);
    data.labels = LabelSet::from_corpus(data.train);
    spec.arms = {{"random", TransferVariant::random, Adaptation::finetune_all}};
    spec.seeds = {1, 2, 3, 4};
    spec.model.vocab_size = data.vocab.size();
    spec.model.embed_dim = spec.model.encoder_hidden = spec.model.context_hidden = 8;
    spec.model.labels = data.labels.names();
    spec.training.max_epochs = 3;
    spec.keep_traces = false;
  }
};

void BM_experiment(benchmark::State& state) {
  SmallExperiment e;
  e.spec.parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(e.spec, e.data));
}

BENCHMARK(BM_experiment)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
