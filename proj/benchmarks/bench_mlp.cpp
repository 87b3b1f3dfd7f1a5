#include <benchmark/benchmark.h>

#include "nnk/mlp.hpp"
#include "nnk/rng.hpp"

using namespace nnk;

static void BM_ForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const int width = static_cast<int>(state.range(1));
  const MlpModel model = make_mlp(64, {width}, 16, 0.0, 1);
  Matrix input(batch, 64);
  input.setRandom();
  Matrix upstream(batch, 16);
  upstream.setRandom();
  auto rng = make_rng(0, "bench");
  for (auto _ : state) {
    ForwardCache cache;
    forward(model, input, false, rng, &cache);
    benchmark::DoNotOptimize(backward(model, cache, upstream));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardBackward)->Args({20, 64})->Args({20, 512})->Args({256, 64});
