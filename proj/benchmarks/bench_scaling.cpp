#include <random>

#include <benchmark/benchmark.h>

#include "pairscale/anchors.hpp"
#include "pairscale/experiment.hpp"
#include "pairscale/normal.hpp"
#include "pairscale/scaling.hpp"

using namespace pairscale;

namespace {

PreferenceMatrix random_matrix(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  PreferenceMatrix p(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p.set(i, j, u(rng));
  return p;
}

void BM_LogNormCdf(benchmark::State& state) {
  const double lo = static_cast<double>(state.range(0));
  double x = lo;
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_norm_cdf(x));
    x += 1e-3;
    if (x > lo + 8.0) x = lo;
  }
}
BENCHMARK(BM_LogNormCdf)->Arg(-40)->Arg(-8)->Arg(0);

void BM_SolveMap(benchmark::State& state) {
  const auto p = random_matrix(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_map(p, SolverConfig{}));
}
BENCHMARK(BM_SolveMap)->RangeMultiplier(2)->Range(2, 64);

void BM_ScoreImage(benchmark::State& state) {
  const auto data = make_synthetic_dataset({.count = 400, .seed = 3});
  const OracleComparator cmp(data, {});
  const auto anchors = select_anchors(data, static_cast<int>(state.range(0)), 1);
  const AnchorScorer scorer(anchors, cmp, {});
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(scorer.score(data[i].image_id));
    i = (i + 1) % data.size();
  }
}
BENCHMARK(BM_ScoreImage)->Arg(5)->Arg(10)->Arg(20);

void BM_SyntheticExperiment(benchmark::State& state) {
  const auto data = make_synthetic_dataset({.count = 200, .seed = 0});
  ExperimentConfig cfg;
  cfg.splits = 10;
  cfg.jobs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(data, cfg));
}
BENCHMARK(BM_SyntheticExperiment)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
