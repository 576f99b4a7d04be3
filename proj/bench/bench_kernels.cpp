// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to
// compare thread counts.

#include <benchmark/benchmark.h>

#include "calibkit/kernels.hpp"
#include "calibkit/posthoc.hpp"

namespace {

using namespace calibkit;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.next_normal();
  return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.next_below(k));
  return y;
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1);
  const Matrix b = random_matrix(64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <Matrix (*Fn)(const Matrix&)>
void BM_Softmax(benchmark::State& state) {
  const Matrix z = random_matrix(static_cast<std::size_t>(state.range(0)), 10, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(z));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <std::vector<double> (*Fn)(const Matrix&, std::span<const int>, int)>
void BM_Classwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix p = kernels::serial::softmax_rows(random_matrix(n, 10, 4));
  const auto y = random_labels(n, 10, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p, y, 15));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <std::vector<double> (*Fn)(const Matrix&, std::span<const int>, std::span<const double>)>
void BM_TemperatureGrid(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix z = random_matrix(n, 10, 6);
  const auto y = random_labels(n, 10, 7);
  const auto grid = temperature_grid();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(z, y, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

BENCHMARK(BM_Matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(1024)->Arg(16384);
BENCHMARK(BM_Matmul<kernels::omp::matmul>)->Name("matmul/omp")->Arg(1024)->Arg(16384);
BENCHMARK(BM_Softmax<kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Softmax<kernels::omp::softmax_rows>)->Name("softmax/omp")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Classwise<kernels::serial::classwise_errors>)->Name("classwise/serial")->Arg(10000);
BENCHMARK(BM_Classwise<kernels::omp::classwise_errors>)->Name("classwise/omp")->Arg(10000);
BENCHMARK(BM_TemperatureGrid<kernels::serial::temperature_nll>)->Name("ts_grid/serial")->Arg(5000);
BENCHMARK(BM_TemperatureGrid<kernels::omp::temperature_nll>)->Name("ts_grid/omp")->Arg(5000);

}  // namespace

BENCHMARK_MAIN();
