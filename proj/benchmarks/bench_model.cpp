#include <benchmark/benchmark.h>

#include "atb/model.hpp"
#include "atb/rng.hpp"
#include "atb/supernet.hpp"

using namespace atb;

namespace {

std::vector<int> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> ids(n);
  for (auto& id : ids) id = static_cast<int>(rng.uniform_int(vocab));
  return ids;
}

void bm_encoder_forward(benchmark::State& state) {
  const ArchConfig arch{static_cast<int>(state.range(0)), 32, 32, 32, 32, 128, 32, 4};
  Model m = init_model(arch, 64, 64, 7);
  const std::vector<int> ids = random_ids(32, 64, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encoder_forward(m, ids, true));
  }
}
BENCHMARK(bm_encoder_forward)->Arg(1)->Arg(2)->Arg(4);

void bm_extract_and_gather(benchmark::State& state) {
  SuperConfig sc;
  sc.arch = ArchConfig{4, 32, 32, 32, 32, 128, 32, 4};
  sc.vocab = 64;
  sc.max_seq = 32;
  SuperNet net = build_supernet(sc, 9);
  const ArchConfig arch{2, 16, 16, 16, 16, 64, 16, 2};
  for (auto _ : state) {
    SubModelView view = extract_submodel(net, arch, ExtractStrategy::HEAD_PREFIX);
    benchmark::DoNotOptimize(gather(net, view));
  }
}
BENCHMARK(bm_extract_and_gather);

void bm_materialize(benchmark::State& state) {
  SuperConfig sc;
  sc.arch = ArchConfig{4, 32, 32, 32, 32, 128, 32, 4};
  sc.vocab = 64;
  sc.max_seq = 32;
  SuperNet net = build_supernet(sc, 10);
  const ArchConfig arch{2, 16, 16, 16, 16, 64, 16, 2};
  const SubModelView view = extract_submodel(net, arch, ExtractStrategy::PER_HEAD_SLICE);
  for (auto _ : state) {
    benchmark::DoNotOptimize(materialize(net, view));
  }
}
BENCHMARK(bm_materialize);

void bm_scatter(benchmark::State& state) {
  SuperConfig sc;
  sc.arch = ArchConfig{4, 32, 32, 32, 32, 128, 32, 4};
  sc.vocab = 64;
  sc.max_seq = 32;
  SuperNet net = build_supernet(sc, 11);
  const ArchConfig arch{2, 16, 16, 16, 16, 64, 16, 2};
  const SubModelView view = extract_submodel(net, arch, ExtractStrategy::HEAD_PREFIX);
  ParamMap grads = gather(net, view);
  ParamMap buffer = zeros_like(net.params);
  for (auto _ : state) {
    scatter_gradients(view, grads, buffer);
    benchmark::DoNotOptimize(buffer);
  }
}
BENCHMARK(bm_scatter);

}  // namespace
