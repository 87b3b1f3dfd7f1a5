#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "nnk/kernel.hpp"

using namespace nnk;

namespace {

CentreBank make_bank(int m, int d, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CentreBank bank;
  bank.centres = Matrix(m, d);
  bank.labels.resize(m);
  bank.weights = Vector::Ones(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) bank.centres(i, j) = gauss(rng);
    bank.labels[i] = i % classes;
  }
  bank.num_classes = classes;
  return bank;
}

}  // namespace

static void BM_Classify(benchmark::State& state) {
  const int neighbours = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const CentreBank bank = make_bank(neighbours, d, 16, 1);
  std::vector<std::uint32_t> ids(neighbours);
  std::iota(ids.begin(), ids.end(), 0);
  KernelConfig cfg;
  Vector x = Vector::Zero(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(classify(x, bank, ids, cfg));
  }
  state.SetItemsProcessed(state.iterations() * neighbours);
}
BENCHMARK(BM_Classify)->Args({100, 64})->Args({100, 1024})->Args({1000, 64});

static void BM_LossBackward(benchmark::State& state) {
  const int neighbours = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const CentreBank bank = make_bank(neighbours, d, 16, 2);
  std::vector<std::uint32_t> ids(neighbours);
  std::iota(ids.begin(), ids.end(), 0);
  KernelConfig cfg;
  Vector x = Vector::Zero(d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nnk_loss_backward(x, 0, bank, ids, cfg));
  }
  state.SetItemsProcessed(state.iterations() * neighbours);
}
BENCHMARK(BM_LossBackward)->Args({100, 64})->Args({100, 1024});
