#include <benchmark/benchmark.h>

#include "atb/ops.hpp"
#include "atb/rng.hpp"
#include "atb/tape.hpp"

using namespace atb;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Tensor t({r, c});
  Rng rng(seed);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1);
  const Tensor b = random_matrix(n, n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void bm_softmax_rows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(n, n, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::softmax_rows(x));
  }
}
BENCHMARK(bm_softmax_rows)->Arg(32)->Arg(128);

void bm_layer_norm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(n, n, 4);
  const Tensor gamma = Tensor::full({n}, 1.0);
  const Tensor beta = Tensor::zeros({n});
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::layer_norm(x, gamma, beta, 1e-12));
  }
}
BENCHMARK(bm_layer_norm)->Arg(32)->Arg(128);

void bm_tape_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 5);
  const Tensor b = random_matrix(n, n, 6);
  for (auto _ : state) {
    Tape tape;
    Value av = tape.param("a", a);
    Value bv = tape.param("b", b);
    Value y = tape.softmax_rows(tape.matmul(av, bv));
    Value loss = tape.mse(y, tape.constant(Tensor::zeros({n, n})));
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(bm_tape_backward)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
