#include <benchmark/benchmark.h>

#include "induction/config.hpp"
#include "induction/datagen.hpp"
#include "induction/model.hpp"
#include "induction/training.hpp"

using namespace induction;

namespace {

struct Fixture {
  std::shared_ptr<const EmbeddingSet> emb;
  TransformerParams params;
  std::vector<SequenceSample> batch;

  Fixture(PeMode pe, std::size_t d, std::size_t T, std::size_t batch_size) {
    ExperimentConfig cfg;
    cfg.d = d;
    cfg.T = T;
    cfg.T_max = 2 * T;
    cfg.init_std = 0.02;
    emb = make_embedding_set(cfg, 1);
    params = make_initial_params(cfg, emb, pe, 2);
    const TriggeredBigram model = uniform_bigram(cfg.vocab, cfg.triggers);
    Rng rng(3);
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(sample_sequence(model, T, rng));
  }
};

void BM_Forward(benchmark::State& state) {
  const Fixture f(static_cast<PeMode>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                  static_cast<std::size_t>(state.range(2)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.params, f.batch[0]));
  state.SetLabel(to_string(f.params.pe));
}

void BM_Backward(benchmark::State& state) {
  const Fixture f(static_cast<PeMode>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                  static_cast<std::size_t>(state.range(2)), 1);
  const std::vector<ParamName> names = default_trainables();
  for (auto _ : state)
    benchmark::DoNotOptimize(backward(f.params, f.batch[0], MaskPolicy::outputs_only, names));
  state.SetLabel(to_string(f.params.pe));
}

void BM_BatchGradient(benchmark::State& state) {
  const Fixture f(PeMode::rpe, 64, 64, static_cast<std::size_t>(state.range(0)));
  const std::vector<ParamName> names = default_trainables();
  for (auto _ : state)
    benchmark::DoNotOptimize(batch_gradient(f.params, f.batch, MaskPolicy::outputs_only, names));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Matrix a = gaussian_matrix(n, n, 1.0, rng), b = gaussian_matrix(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}

}  // namespace

BENCHMARK(BM_Forward)
    ->Args({static_cast<int>(PeMode::rpe), 64, 64})
    ->Args({static_cast<int>(PeMode::ape), 64, 64})
    ->Args({static_cast<int>(PeMode::rpe), 256, 256})
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Backward)
    ->Args({static_cast<int>(PeMode::rpe), 64, 64})
    ->Args({static_cast<int>(PeMode::ape), 64, 64})
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BatchGradient)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);
BENCHMARK_MAIN();
