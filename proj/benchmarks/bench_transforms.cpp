#include <benchmark/benchmark.h>

#include "cwt/baselines.hpp"
#include "cwt/cwt_transform.hpp"
#include "cwt/image_ops.hpp"

using namespace cwt;

namespace {

Tensor noise(std::size_t c, std::size_t h, std::size_t w) {
  Rng rng(1);
  Tensor t({c, h, w});
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

void BM_ResizeBilinear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise(3, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(resize(x, n * 3 / 2, n * 3 / 2, Interpolation::Bilinear));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_ResizeBilinear)->Arg(28)->Arg(32)->Arg(224);

void BM_Rotate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise(3, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(rotate(x, 17.0, Interpolation::Bilinear));
}
BENCHMARK(BM_Rotate)->Arg(32)->Arg(224);

void BM_CwtForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise(3, n, n);
  const CwtParams p;
  Rng rng(2);
  const auto trace = sample_cwt_copy(p, n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cwt_forward(x, trace, p));
}
BENCHMARK(BM_CwtForward)->Arg(28)->Arg(32)->Arg(224);

void BM_CwtVjp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise(3, n, n);
  const CwtParams p;
  Rng rng(2);
  const auto trace = sample_cwt_copy(p, n, n, rng);
  const Tensor g = cwt_forward(x, trace, p);
  for (auto _ : state) benchmark::DoNotOptimize(cwt_vjp(g, trace, p));
}
BENCHMARK(BM_CwtVjp)->Arg(28)->Arg(224);

void BM_DimForward(benchmark::State& state) {
  const Tensor x = noise(3, 32, 32);
  DimParams p;
  p.probability = 1.0;
  Rng rng(3);
  const auto trace = sample_dim(p, 32, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dim_forward(x, trace, p.kernel));
}
BENCHMARK(BM_DimForward);

void BM_BsrForward(benchmark::State& state) {
  const Tensor x = noise(3, 32, 32);
  const BsrParams p;
  Rng rng(4);
  const auto trace = sample_bsr(p, 32, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(bsr_forward(x, trace, p.kernel));
}
BENCHMARK(BM_BsrForward);

}  // namespace

BENCHMARK_MAIN();
