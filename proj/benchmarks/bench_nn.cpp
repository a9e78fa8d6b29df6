#include <benchmark/benchmark.h>

#include "cwt/attack.hpp"
#include "cwt/nn.hpp"
#include "cwt/plugin.hpp"

using namespace cwt;

namespace {

Tensor noise(const Shape& shape) {
  Rng rng(1);
  Tensor t(shape);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

void BM_Forward(benchmark::State& state, const char* spec_name) {
  const Model m = Model::initialize(builtin_spec(spec_name), 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({batch, 1, 28, 28});
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Forward, tiny, "tiny")->Arg(1)->Arg(32);
BENCHMARK_CAPTURE(BM_Forward, cnn2, "cnn2")->Arg(1)->Arg(32);

void BM_InputGrad(benchmark::State& state) {
  const Model m = Model::initialize(builtin_spec("cnn2"), 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({batch, 1, 28, 28});
  const std::vector<int> labels(batch, 3);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_input_grad(m, x, std::span<const int>(labels)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_InputGrad)->Arg(1)->Arg(20);

void BM_Attack(benchmark::State& state, const char* plugin_name) {
  const Model m = Model::initialize(builtin_spec("cnn2"), 1);
  const Tensor x = noise({1, 28, 28});
  const auto plugin = make_plugin(plugin_name);
  const AttackConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(attack(m, x, 3, cfg, *plugin, 0));
}
BENCHMARK_CAPTURE(BM_Attack, mifgsm, "identity")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Attack, cwt, "cwt")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
