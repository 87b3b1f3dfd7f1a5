#include <benchmark/benchmark.h>

#include <random>

#include "nnk/ann.hpp"

using namespace nnk;

namespace {

Matrix make_points(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix points(n, d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) points(r, c) = u(rng);
  }
  return points;
}

}  // namespace

static void BM_BruteForceKnn(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const Matrix points = make_points(n, d, 3);
  const Vector query = points.row(n / 2).transpose();
  for (auto _ : state) {
    benchmark::DoNotOptimize(brute_force_knn(query, points, 100));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BruteForceKnn)->Args({10000, 64})->Args({10000, 1024});

static void BM_GraphBuild(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix points = make_points(n, 64, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_graph(points, 20));
  }
}
BENCHMARK(BM_GraphBuild)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_GraphSearch(benchmark::State& state) {
  const int n = 10000;
  const int budget = static_cast<int>(state.range(0));
  const Matrix points = make_points(n, 64, 7);
  const GraphIndex index = build_graph(points, 20);
  SearchParams params;
  params.k = 100;
  params.backtrack_budget = budget;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector query(64);
  for (auto _ : state) {
    for (int c = 0; c < 64; ++c) query[c] = u(rng);
    benchmark::DoNotOptimize(search(index, points, query, params));
  }
}
BENCHMARK(BM_GraphSearch)->Arg(200)->Arg(800)->Arg(3200);
