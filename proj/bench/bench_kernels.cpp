// OpenMP kernels against their serial references. Run with OMP_NUM_THREADS
// set to compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "crosstraj/kernels.hpp"
#include "crosstraj/rng.hpp"

using namespace crosstraj;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.flat()) v = rng.normal();
  return m;
}

std::vector<Point> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> p(n);
  for (auto& q : p) q = {rng.normal(), rng.normal(0.0, 0.5)};
  return p;
}

// First layer shape: nodes x 2048 times 2048 x 256.
template <auto Fn>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 2048, 1), b = random_matrix(2048, 256, 2);
  Matrix c(n, 256);
  for (auto _ : state) {
    Fn(view(a), view(b), view(c));
    benchmark::DoNotOptimize(c.flat().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 2048 * 256));
}

template <auto Fn>
void BM_kde(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 3);
  const Bounds box{-4, 4, -3, 3};
  std::vector<double> out(100 * 100);
  for (auto _ : state) {
    Fn(pts, box, 0.3, 0.2, 100, 100, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_min_distance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_points(n, 4), b = random_points(n, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
}

}  // namespace

BENCHMARK(BM_gemm<kernels::gemm>)->Name("gemm/omp")->Arg(72)->Arg(256);
BENCHMARK(BM_gemm<kernels::reference::gemm>)->Name("gemm/serial")->Arg(72)->Arg(256);
BENCHMARK(BM_kde<kernels::kde_grid>)->Name("kde_grid/omp")->Arg(200)->Arg(2000);
BENCHMARK(BM_kde<kernels::reference::kde_grid>)->Name("kde_grid/serial")->Arg(200)->Arg(2000);
BENCHMARK(BM_min_distance<kernels::mean_min_distance>)->Name("mean_min_distance/omp")->Arg(500)->Arg(4000);
BENCHMARK(BM_min_distance<kernels::reference::mean_min_distance>)->Name("mean_min_distance/serial")->Arg(500)->Arg(4000);

BENCHMARK_MAIN();
