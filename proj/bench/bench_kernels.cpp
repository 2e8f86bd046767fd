// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against the OpenMP kernels, plus one training
// step of the default model.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "bilcnet/kernels.hpp"
#include "bilcnet/model.hpp"
#include "bilcnet/train.hpp"

namespace {

using GemmFn = void (*)(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Shapes: rows = batch * steps, inner/outer = layer widths of the default model.
void run_gemm(benchmark::State& state, GemmFn fn) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto p = static_cast<std::size_t>(state.range(2));
  const auto a = random_buffer(m * k, 1), b = random_buffer(k * p, 2);
  std::vector<float> c(std::max(m, k) * p);
  for (auto _ : state) {
    fn(m, k, p, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * static_cast<double>(m * k * p), benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}

void gemm_args(benchmark::internal::Benchmark* b) {
  b->Args({640, 128, 512})->Args({640, 512, 128})->Args({64, 64, 256})->Args({640, 61, 256});
}

void BM_GemmNN_Reference(benchmark::State& s) { run_gemm(s, &bilcnet::kernels::reference::gemm_nn<float>); }
void BM_GemmNN_Parallel(benchmark::State& s) { run_gemm(s, &bilcnet::kernels::gemm_nn<float>); }
void BM_GemmNT_Reference(benchmark::State& s) { run_gemm(s, &bilcnet::kernels::reference::gemm_nt<float>); }
void BM_GemmNT_Parallel(benchmark::State& s) { run_gemm(s, &bilcnet::kernels::gemm_nt<float>); }
void BM_GemmTN_Reference(benchmark::State& s) { run_gemm(s, &bilcnet::kernels::reference::gemm_tn<float>); }
void BM_GemmTN_Parallel(benchmark::State& s) { run_gemm(s, &bilcnet::kernels::gemm_tn<float>); }

BENCHMARK(BM_GemmNN_Reference)->Apply(gemm_args);
BENCHMARK(BM_GemmNN_Parallel)->Apply(gemm_args);
BENCHMARK(BM_GemmNT_Reference)->Apply(gemm_args);
BENCHMARK(BM_GemmNT_Parallel)->Apply(gemm_args);
BENCHMARK(BM_GemmTN_Reference)->Apply(gemm_args);
BENCHMARK(BM_GemmTN_Parallel)->Apply(gemm_args);

void BM_TrainStep(benchmark::State& state) {
  bilcnet::BiLCNet<float> net(bilcnet::BiLCNetConfig::with_input_dim(61));
  bilcnet::Rng rng(7);
  net.init(rng);
  const auto xs = random_buffer(64 * 10 * 61, 3);
  bilcnet::Tensor<float> x({64, 10, 61});
  std::copy(xs.begin(), xs.end(), x.data());
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  bilcnet::BiLCNet<float>::Cache cache;
  for (auto _ : state) {
    net.zero_grad();
    const auto logits = net.forward(x, bilcnet::Mode::Train, rng, &cache);
    bilcnet::Tensor<float> g;
    benchmark::DoNotOptimize(bilcnet::cross_entropy<float>(logits, labels, &g));
    net.backward(g, cache);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
