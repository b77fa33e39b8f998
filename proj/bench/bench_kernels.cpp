#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cha/kernels.hpp"

namespace {

struct Operands {
  std::vector<double> a, b, c;
};

Operands make_operands(std::size_t n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Operands o{std::vector<double>(n * n), std::vector<double>(n * n), std::vector<double>(n * n)};
  for (auto& x : o.a) x = d(rng);
  for (auto& x : o.b) x = d(rng);
  return o;
}

void BM_GemmSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands o = make_operands(n);
  for (auto _ : state) {
    cha::kernels::gemm_serial({n, n, n}, o.a, o.b, o.c);
    benchmark::DoNotOptimize(o.c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

void BM_GemmParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands o = make_operands(n);
  for (auto _ : state) {
    cha::kernels::gemm({n, n, n}, o.a, o.b, o.c);
    benchmark::DoNotOptimize(o.c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

}  // namespace

BENCHMARK(BM_GemmSerial)->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_GemmParallel)->RangeMultiplier(2)->Range(16, 256);

BENCHMARK_MAIN();
