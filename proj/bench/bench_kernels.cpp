// SPDX-License-Identifier: Apache-2.0
// Serial vs OpenMP matrix products, plus one training step per variant.
#include "covcast/kernels.hpp"
#include "covcast/model.hpp"
#include "covcast/nn.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace covcast;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  XorShift64Star rng(seed);
  Matrix m(rows, cols);
  for (auto &v : m.values())
    v = rng.uniform() - 0.5;
  return m;
}

enum class Op { NN, TN, NT };

// Product of an n x k by a k x m operand, stored transposed for TN / NT.
template <auto Kernel, Op op>
void BM_gemm(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const Matrix a = op == Op::TN ? random_matrix(k, n, 1) : random_matrix(n, k, 1);
  const Matrix b = op == Op::NT ? random_matrix(m, k, 2) : random_matrix(k, m, 2);
  Matrix c(n, m);
  for (auto _ : state) {
    Kernel(a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * k * m));
}

void gemm_args(benchmark::internal::Benchmark *b) {
  b->Args({16, 50, 200})->Args({16, 128, 256})->Args({256, 256, 256})->Args({512, 512, 512});
}

BENCHMARK(BM_gemm<&kernels::serial::gemm, Op::NN>)->Name("gemm/serial")->Apply(gemm_args);
BENCHMARK(BM_gemm<&kernels::parallel::gemm, Op::NN>)->Name("gemm/parallel")->Apply(gemm_args);
BENCHMARK(BM_gemm<&kernels::serial::gemm_tn, Op::TN>)->Name("gemm_tn/serial")->Apply(gemm_args);
BENCHMARK(BM_gemm<&kernels::parallel::gemm_tn, Op::TN>)->Name("gemm_tn/parallel")->Apply(gemm_args);
BENCHMARK(BM_gemm<&kernels::serial::gemm_nt, Op::NT>)->Name("gemm_nt/serial")->Apply(gemm_args);
BENCHMARK(BM_gemm<&kernels::parallel::gemm_nt, Op::NT>)->Name("gemm_nt/parallel")->Apply(gemm_args);

// Forward and backward over one batch of 16 windows at the default sizes.
void BM_train_step(benchmark::State &state) {
  ModelConfig c;
  c.variant = static_cast<Variant>(state.range(0));
  c.bidirectional = state.range(1) != 0;
  RecurrentModel model(c);
  XorShift64Star rng(7);
  std::vector<double> x(16 * c.window_len), t(16);
  for (auto &v : x)
    v = rng.uniform();
  for (auto &v : t)
    v = rng.uniform();
  ForwardCache cache;
  for (auto _ : state) {
    model.zero_grad();
    benchmark::DoNotOptimize(model.loss_and_gradients(x, t, cache));
  }
  state.SetLabel(c.model_id());
}

BENCHMARK(BM_train_step)
    ->ArgsProduct({{static_cast<long>(Variant::Lstm), static_cast<long>(Variant::Gru),
                    static_cast<long>(Variant::ConvLstm)},
                   {0, 1}})
    ->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
