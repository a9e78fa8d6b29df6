#include "cwt/selfcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "cwt/attack.hpp"
#include "cwt/eval.hpp"
#include "cwt/nn.hpp"
#include "cwt/plugin.hpp"

namespace cwt::cli {
namespace {

template <typename T>
BasicTensor<T> random_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  BasicTensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

double relative(double a, double b, double floor = 0.0) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

void record(GroupResult& g, double error, double tolerance, const std::string& what) {
  ++g.checks;
  g.worst = std::max(g.worst, error);
  if (!(error <= tolerance)) {
    if (g.failures++ == 0) {
      std::ostringstream s;
      s << what << ": error " << error << " > " << tolerance;
      g.first_failure = s.str();
    }
  }
}

// <f(x), y> against <x, f^T(y)> with non-negative data, so neither side is near zero.
template <typename Fwd, typename Adj>
void adjoint_trial(GroupResult& g, Rng& rng, const Shape& in, Fwd&& fwd, Adj&& adj, const std::string& what) {
  const Tensor x = random_tensor<float>(rng, in, 0.0, 1.0);
  const Tensor fx = fwd(x);
  const Tensor y = random_tensor<float>(rng, fx.shape(), 0.0, 1.0);
  const Tensor aty = adj(y);
  record(g, relative(dot(fx, y), dot(x, aty)), 1e-4, what);
}

GroupResult adjoint_group(std::uint64_t seed, const SelfcheckHooks& hooks) {
  GroupResult g{"adjoint"};
  const ResizeVjp resize_adj = hooks.resize_vjp ? hooks.resize_vjp : ResizeVjp(resize_vjp<float>);
  Rng rng = Rng::split(seed, 1);
  constexpr int kTrials = 20;
  auto dim = [&] { return static_cast<std::size_t>(rng.integer(3, 17)); };
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t c = static_cast<std::size_t>(rng.integer(1, 3)), h = dim(), w = dim(), oh = dim(), ow = dim();
    for (Interpolation k : {Interpolation::Bilinear, Interpolation::Nearest}) {
      adjoint_trial(
          g, rng, {c, h, w}, [&](const Tensor& x) { return resize(x, oh, ow, k); },
          [&](const Tensor& y) { return resize_adj(y, h, w, k); }, "resize(" + std::string(to_string(k)) + ")");
    }
    const double angle = rng.uniform(-180.0, 180.0);
    adjoint_trial(
        g, rng, {c, h, w}, [&](const Tensor& x) { return rotate(x, angle, Interpolation::Bilinear); },
        [&](const Tensor& y) { return rotate_vjp(y, angle, Interpolation::Bilinear); }, "rotate");
    const std::size_t ch = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(h)));
    const std::size_t cw = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(w)));
    const std::size_t oy = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(h - ch)));
    const std::size_t ox = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(w - cw)));
    adjoint_trial(
        g, rng, {c, h, w}, [&](const Tensor& x) { return crop(x, oy, ox, ch, cw); },
        [&](const Tensor& y) { return crop_vjp(y, oy, ox, h, w); }, "crop");
  }
  for (const std::string name : {"cwt", "dim", "sim", "bsr"}) {
    const auto plugin = make_plugin(name);
    for (int t = 0; t < kTrials; ++t) {
      const std::size_t h = static_cast<std::size_t>(rng.integer(4, 20)), w = static_cast<std::size_t>(rng.integer(4, 20));
      Rng stream = rng.split(static_cast<std::uint64_t>(t));
      const auto inst = plugin->sample(h, w, static_cast<std::size_t>(t), stream);
      adjoint_trial(
          g, rng, {1, h, w}, [&](const Tensor& x) { return inst->forward(x); },
          [&](const Tensor& y) { return inst->vjp(y); }, name);
    }
  }
  return g;
}

GroupResult finite_difference_group(std::uint64_t seed) {
  GroupResult g{"finite-difference"};
  const ModelSpec spec = ModelSpec::parse("input 2 8 8; conv 4 3 1 1; relu; maxpool; conv 6 3; relu; flatten; dense 5");
  const ModelD model = BasicModel<double>::initialize(spec, seed);
  Rng rng = Rng::split(seed, 2);
  const TensorD batch = random_tensor<double>(rng, {3, 2, 8, 8}, 0.0, 1.0);
  const std::vector<int> labels = {0, 3, 4};
  const double h = 1e-6;

  const auto cache = forward_cache(model, batch);
  const auto analytic = backward(model, cache, cross_entropy(cache.outputs.back(), std::span<const int>(labels)).grad_logits);
  auto loss_at = [&](const ModelD& m, const TensorD& x) { return cross_entropy(m.forward(x), std::span<const int>(labels)).loss; };
  for (int t = 0; t < 20; ++t) {
    const std::size_t i = static_cast<std::size_t>(rng.below(batch.size()));
    TensorD plus = batch, minus = batch;
    plus[i] += h;
    minus[i] -= h;
    const double fd = (loss_at(model, plus) - loss_at(model, minus)) / (2 * h);
    record(g, relative(fd, analytic.input[i], 1e-6), 1e-5, "input[" + std::to_string(i) + "]");
  }
  for (int t = 0; t < 20; ++t) {
    std::size_t layer = 0;
    do layer = static_cast<std::size_t>(rng.below(model.params().size()));
    while (model.params()[layer].weight.size() == 0);
    const std::size_t i = static_cast<std::size_t>(rng.below(model.params()[layer].weight.size()));
    auto shifted = [&](double d) {
      auto params = model.params();
      params[layer].weight[i] += d;
      return ModelD(spec, params);
    };
    const double fd = (loss_at(shifted(h), batch) - loss_at(shifted(-h), batch)) / (2 * h);
    record(g, relative(fd, analytic.params[layer].weight[i], 1e-6), 1e-5,
           "layer" + std::to_string(layer) + ".weight[" + std::to_string(i) + "]");
  }
  return g;
}

GroupResult identity_group(std::uint64_t seed) {
  GroupResult g{"identity"};
  Rng rng = Rng::split(seed, 3);
  PluginOptions opts;
  opts.cwt.scale_max = 1.0;
  opts.cwt.rotated_blocks = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    opts.cwt.blocks = n;
    for (bool pre : {true, false}) {
      opts.cwt.pre_interpolation = pre;
      const auto plugin = make_plugin("cwt", opts);
      const Tensor x = random_tensor<float>(rng, {3, 13, 11}, 0.0, 1.0);
      Rng stream = rng.split(n);
      const auto inst = plugin->sample(13, 11, 0, stream);
      record(g, bitwise_equal(inst->forward(x), x) ? 0.0 : 1.0, 0.0, "cwt s=1 k=0 n=" + std::to_string(n));
    }
  }
  const Tensor x = random_tensor<float>(rng, {1, 9, 9}, 0.0, 1.0);
  const auto id = make_plugin("identity");
  Rng stream = rng.split(99);
  record(g, bitwise_equal(id->sample(9, 9, 0, stream)->forward(x), x) ? 0.0 : 1.0, 0.0, "identity plugin");
  record(g, bitwise_equal(resize(x, 9, 9, Interpolation::Bilinear), x) ? 0.0 : 1.0, 0.0, "resize to same size");
  record(g, bitwise_equal(rotate(x, 0.0, Interpolation::Bilinear), x) ? 0.0 : 1.0, 0.0, "rotate 0");

  const Model model = Model::initialize(ModelSpec::parse("input 1 9 9; conv 2 3; relu; flatten; dense 3"), seed);
  AttackConfig cfg;
  cfg.iters = 0;
  const Tensor adv = attack(model, x, 0, cfg, *id);
  record(g, bitwise_equal(adv, x) ? 0.0 : 1.0, 0.0, "attack with zero iterations");
  return g;
}

// Published transfer rows for a ResNet-18 surrogate. The CWT row's printed std
// is the population value; the DIM row prints the n - 1 value.
GroupResult aggregation_group() {
  GroupResult g{"aggregation"};
  const std::array<double, 8> cwt_row = {100.0, 90.2, 93.7, 99.4, 55.9, 68.8, 84.1, 83.6};
  const std::array<double, 8> dim_row = {100.0, 61.7, 66.1, 90.4, 30.4, 37.4, 53.4, 56.9};
  const Aggregate c = aggregate(cwt_row);
  const Aggregate d = aggregate(dim_row);
  record(g, std::abs(c.mean - 84.5), 0.05, "cwt mean");
  record(g, std::abs(c.std_dev - 14.3), 0.05, "cwt std");
  record(g, std::abs(d.mean - 62.0), 0.05, "dim mean");
  record(g, std::abs(d.sample_std_dev - 23.8), 0.05, "dim std (n - 1)");
  const std::array<double, 2> pair = {1.0, 3.0};
  record(g, std::abs(aggregate(pair).std_dev - 1.0), 1e-12, "population std of {1,3}");
  return g;
}

}  // namespace

std::vector<GroupResult> run_selfcheck(std::uint64_t seed, const SelfcheckHooks& hooks) {
  return {adjoint_group(seed, hooks), finite_difference_group(seed), identity_group(seed), aggregation_group()};
}

}  // namespace cwt::cli
