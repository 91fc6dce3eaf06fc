#include <filesystem>
#include <random>

#include <benchmark/benchmark.h>
#include <unistd.h>

#include "headlens/artifact_store.h"
#include "headlens/metrics.h"
#include "headlens/pruning.h"
#include "headlens/textspan.h"
#include "synthetic/synthetic_export.h"

namespace {

using namespace headlens;

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// N images x d dims against a pool of M candidates, K = 5.
void BM_TextSpan(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0), m = state.range(1);
  const Eigen::Index d = 512;
  const Eigen::MatrixXd a = gaussian(rng, n, d);
  Eigen::MatrixXd c = gaussian(rng, m, d);
  c.rowwise().normalize();
  for (auto _ : state) benchmark::DoNotOptimize(textspan(a, c, 5));
  state.SetComplexityN(n * m);
}
BENCHMARK(BM_TextSpan)->Args({1000, 500})->Args({1000, 3498})->Args({4000, 3498})->Unit(benchmark::kMillisecond);

void BM_KendallTau(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> v(0, 100);
  std::vector<double> x(static_cast<std::size_t>(state.range(0))), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = v(rng);
    y[i] = v(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(kendall_tau(x, y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KendallTau)->RangeMultiplier(10)->Range(100, 1000000)->Complexity(benchmark::oNLogN);

// Pruning every window head of the planted fixture, scaled up in images.
void BM_Pruning(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / ("headlens-bench-" + std::to_string(::getpid()));
  synthetic::PlantedOptions opt;
  opt.images = static_cast<std::size_t>(state.range(0));
  const auto bundle = load_bundle(synthetic::write_planted_fixture(dir, opt).manifest);
  std::filesystem::remove_all(dir);
  PruneSpec spec;
  spec.heads = bundle.manifest().window_heads();
  for (auto _ : state) benchmark::DoNotOptimize(pruned_representations(bundle, spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Pruning)->Arg(240)->Arg(2400)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
