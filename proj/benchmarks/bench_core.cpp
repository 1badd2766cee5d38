#include <benchmark/benchmark.h>

#include <random>

#include "pds/estimators.hpp"
#include "pds/model.hpp"
#include "pds/ops.hpp"

using namespace pds;

namespace {

Tensor random(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_Conv3d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random({c, 8, 16, 32}, 1), w = random({c, c, 3, 3, 3}, 2), b = random({c}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv3d(x, w, b, Extent3{1, 1, 1}, Extent3{1, 1, 1}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * c * 27 * 8 * 16 * 32));
}
BENCHMARK(BM_Conv3d)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0)), w = 2 * h;
  PdsNetwork net(NetConfig::desk(), 1);
  const auto left = random({3, h, w}, 4), right = random({3, h, w}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(left, right));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  PdsNetwork net(NetConfig::desk(), 1);
  const auto left = random({3, 32, 64}, 4), right = random({3, 32, 64}, 5);
  for (auto _ : state) {
    auto costs = net.forward(left, right);
    auto loss = sum(costs.values);
    loss.backward();
    for (auto& p : net.parameters()) p.value.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_SubpixelMap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto post = cost_to_posterior(BasicCostTensor<float>{random({24, n, n}, 6)});
  for (auto _ : state) benchmark::DoNotOptimize(subpixel_map(post, 4.0));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n));
}
BENCHMARK(BM_SubpixelMap)->Arg(64)->Arg(256);

void BM_SoftArgmin(benchmark::State& state) {
  const auto post = cost_to_posterior(BasicCostTensor<float>{random({24, 256, 256}, 7)});
  for (auto _ : state) benchmark::DoNotOptimize(soft_argmin(post));
}
BENCHMARK(BM_SoftArgmin);

}  // namespace

BENCHMARK_MAIN();
