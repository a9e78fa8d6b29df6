#include <cmath>

#include "cwt/nn.hpp"
#include "cwt/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cwt;
using test::random_tensor;

namespace {

// Direct 7-loop convolution in double; weight [O,I,k,k], zero padding.
TensorD conv_oracle(const TensorD& in, const TensorD& weight, const TensorD& bias, std::size_t stride,
                    std::size_t pad) {
  const std::size_t B = in.dim(0), I = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = weight.dim(0), k = weight.dim(2);
  const std::size_t OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
  TensorD out({B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = bias[o];
          for (std::size_t i = 0; i < I; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long y = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long x = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
                acc += weight[((o * I + i) * k + ky) * k + kx] * in[((b * I + i) * H + y) * W + x];
              }
          out[((b * O + o) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

template <typename T>
double loss_of(const BasicModel<T>& model, const BasicTensor<T>& batch, std::span<const int> labels) {
  return static_cast<double>(cross_entropy(model.forward(batch), labels).loss);
}

Dataset stripes(std::size_t n, std::uint64_t seed) {
  // Class 0 lights the top half, class 1 the bottom half, plus noise.
  Rng rng(seed);
  Dataset d;
  d.images = Tensor({n, 1, 8, 8});
  d.num_classes = 2;
  d.split = "stripes";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    d.labels.push_back(label);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const bool lit = (y < 4) == (label == 0);
        d.images[(i * 8 + y) * 8 + x] = static_cast<float>((lit ? 0.7 : 0.1) + rng.uniform(0.0, 0.2));
      }
  }
  return d;
}

const char* kToySpec = "input 1 8 8; conv 4 3 1 1; relu; maxpool; flatten; dense 2";

}  // namespace

// ---------------------------------------------------------------------------
// Spec

TEST_CASE("spec parsing: text form, round trip and built-ins") {
  const auto spec = ModelSpec::parse("input 1 28 28\nconv 8 3 1 1 # comment\nrelu\nmaxpool\nflatten\ndense 10\n");
  REQUIRE(spec.layers.size() == 5);
  CHECK(std::get<Conv2d>(spec.layers[0]) == Conv2d{8, 3, 1, 1});
  CHECK(spec.num_classes() == 10);
  CHECK(spec.layer_shapes()[2] == Shape{8, 14, 14});
  CHECK(ModelSpec::parse(spec.to_string()) == spec);
  CHECK(ModelSpec::parse("input 1 5 5; conv 2 3; flatten; dense 3").layer_shapes()[0] == Shape{2, 3, 3});

  for (const auto& name : builtin_spec_names()) {
    const auto b = builtin_spec(name);
    CHECK(b.num_classes() == 10);
    CHECK(b.input == Shape{1, 28, 28});
    CHECK(ModelSpec::parse(b.to_string()).hash() == b.hash());
  }
  CHECK(builtin_spec("tiny").hash() != builtin_spec("cnn2").hash());
  CHECK_THROWS(builtin_spec("resnet18"));
}

TEST_CASE("spec parsing errors name the problem") {
  auto message = [](const char* text) {
    try {
      (void)ModelSpec::parse(text);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("input 1 8 8; pool; dense 2").find("unknown layer 'pool'") != std::string::npos);
  CHECK(message("input 1 8 8; conv x 3; flatten; dense 2").find("bad number 'x'") != std::string::npos);
  CHECK(message("input 1 8 8; conv -2 3; flatten; dense 2").find("line 2") != std::string::npos);
  CHECK(message("conv 2 3; flatten; dense 2").find("no 'input'") != std::string::npos);
  CHECK(message("input 1 8 8; relu 3; flatten; dense 2").find("takes 0..0") != std::string::npos);
  CHECK(message("input 1 8 8; dense 2").find("layer 0 (dense)") != std::string::npos);
  CHECK(message("input 1 2 2; conv 1 5; flatten; dense 2").find("kernel larger") != std::string::npos);
  CHECK(message("input 1 8 8; conv 2 3").find("logit vector") != std::string::npos);
}

TEST_CASE("model construction rejects mismatched parameters") {
  const auto spec = ModelSpec::parse("input 1 4 4; flatten; dense 3");
  std::vector<LayerParams<float>> params(2);
  params[1] = {Tensor({3, 15}), Tensor({3})};
  CHECK_THROWS_AS(Model(spec, params), std::invalid_argument);
  params[1] = {Tensor({3, 16}), Tensor({3})};
  CHECK_NOTHROW(Model(spec, params));
  params.pop_back();
  CHECK_THROWS_AS(Model(spec, params), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Forward

TEST_CASE("conv and dense match direct loops") {
  for (const char* text : {"input 2 7 6; conv 3 3 2 1; flatten; dense 4", "input 3 5 5; conv 2 3 1 0; flatten; dense 4",
                           "input 1 9 8; conv 5 4 3 2; flatten; dense 4"}) {
    CAPTURE(text);
    const auto model = ModelD::initialize(ModelSpec::parse(text), 17);
    auto params = model.params();
    Rng rng(3);
    params[0].bias = random_tensor<double>(rng, params[0].bias.shape(), -0.5, 0.5);
    params[2].bias = random_tensor<double>(rng, params[2].bias.shape(), -0.5, 0.5);
    const ModelD m(model.spec(), params);
    Shape in{3};
    in.insert(in.end(), m.spec().input.begin(), m.spec().input.end());
    const TensorD batch = random_tensor<double>(rng, in, -1.0, 1.0);
    const auto cache = forward_cache(m, batch);
    const auto& c = std::get<Conv2d>(m.spec().layers[0]);
    const TensorD conv = conv_oracle(batch, params[0].weight, params[0].bias, c.stride, c.padding);
    CHECK(max_abs_diff(cache.outputs[1], conv) <= 1e-12);

    const std::size_t F = params[2].weight.dim(1), K = params[2].weight.dim(0);
    const TensorD& flat = cache.outputs[2];
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t k = 0; k < K; ++k) {
        double acc = params[2].bias[k];
        for (std::size_t f = 0; f < F; ++f) acc += params[2].weight[k * F + f] * flat[b * F + f];
        CHECK(cache.outputs[3][b * K + k] == doctest::Approx(acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("relu, global average pool and maxpool on known inputs") {
  const auto spec = ModelSpec::parse("input 1 4 4; relu; maxpool; flatten; dense 1");
  std::vector<LayerParams<double>> params(4);
  params[3] = {TensorD({1, 4}, {1.0, 10.0, 100.0, 1000.0}), TensorD({1})};
  const ModelD m(spec, params);
  const TensorD in({1, 1, 4, 4}, {-1, 2, 0, 0,  //
                                  3, -4, 0, -5, //
                                  1, 1, 7, 8,   //
                                  1, 1, 9, -6});
  const auto cache = forward_cache(m, in);
  CHECK(test::values_of(cache.outputs[2]) == std::vector<double>{3, 0, 1, 9});
  CHECK(m.forward(in)[0] == 3 + 0 + 100 + 9000);

  const auto gap = ModelSpec::parse("input 2 2 2; gap; dense 2");
  std::vector<LayerParams<double>> gp(2);
  gp[1] = {TensorD({2, 2}, {1, 0, 0, 1}), TensorD({2})};
  const TensorD x({1, 2, 2, 2}, {1, 2, 3, 4, 10, 10, 10, 30});
  CHECK(test::values_of(ModelD(gap, gp).forward(x)) == std::vector<double>{2.5, 15});
}

TEST_CASE("maxpool backward: first maximum wins ties, gradient is conserved") {
  const auto spec = ModelSpec::parse("input 1 4 4; maxpool; flatten; dense 1");
  std::vector<LayerParams<double>> params(3);
  params[2] = {TensorD({1, 4}, {1, 2, 3, 4}), TensorD({1})};
  const ModelD m(spec, params);
  const TensorD flat({1, 1, 4, 4}, 0.5);
  const auto cache = forward_cache(m, flat);
  const auto g = backward(m, cache, TensorD({1, 1}, {1.0}));
  CHECK(test::values_of(g.input) == std::vector<double>{1, 0, 2, 0, 0, 0, 0, 0, 3, 0, 4, 0, 0, 0, 0, 0});

  Rng rng(4);
  const auto odd = ModelSpec::parse("input 2 5 7; maxpool; flatten; dense 3");
  const auto model = ModelD::initialize(odd, 5);
  const TensorD batch = random_tensor<double>(rng, {2, 2, 5, 7});
  const auto c2 = forward_cache(model, batch);
  const auto upstream = random_tensor<double>(rng, {2, 3}, -1.0, 1.0);
  const auto g2 = backward(model, c2, upstream, {.params = false, .outputs = true});
  double up = 0, down = 0;
  for (double v : g2.outputs[0].values()) up += v;
  for (double v : g2.input.values()) down += v;
  CHECK(down == doctest::Approx(up).epsilon(1e-12));
  // Rows and columns dropped by the floor receive nothing.
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t x = 0; x < 7; ++x) CHECK(g2.input[((b * 2 + c) * 5 + 4) * 7 + x] == 0.0);
      for (std::size_t y = 0; y < 5; ++y) CHECK(g2.input[((b * 2 + c) * 5 + y) * 7 + 6] == 0.0);
    }
}

// ---------------------------------------------------------------------------
// Loss and gradients

TEST_CASE("cross entropy of a zero model is ln(classes)") {
  for (std::size_t K : {2u, 3u, 10u}) {
    const auto spec = ModelSpec::parse("input 1 6 6; conv 2 3; relu; flatten; dense " + std::to_string(K));
    const Model m = Model::zeros(spec);
    Rng rng(K);
    const Tensor batch = random_tensor(rng, {4, 1, 6, 6});
    const std::vector<int> labels{0, 1, 1, 0};
    CHECK(cross_entropy(m.forward(batch), std::span<const int>(labels)).loss ==
          doctest::Approx(std::log(static_cast<double>(K))).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy: known value, stability, label errors") {
  const TensorD logits({1, 3}, {1.0, 2.0, 3.0});
  const std::vector<int> label{2};
  const auto ce = cross_entropy(logits, std::span<const int>(label));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(ce.loss == doctest::Approx(std::log(z) - 3.0).epsilon(1e-14));
  CHECK(ce.grad_logits[0] == doctest::Approx(std::exp(1.0) / z));
  CHECK(ce.grad_logits[2] == doctest::Approx(std::exp(3.0) / z - 1.0));

  const Tensor huge({1, 2}, {1000.0f, 0.0f});
  const std::vector<int> zero{0}, one{1};
  CHECK(std::isfinite(cross_entropy(huge, std::span<const int>(one)).loss));
  CHECK(cross_entropy(huge, std::span<const int>(one)).loss == doctest::Approx(1000.0f));
  CHECK(cross_entropy(huge, std::span<const int>(zero)).loss == 0.0f);
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(cross_entropy(huge, std::span<const int>(bad)), std::out_of_range);
}

TEST_CASE("gradients match central finite differences in float64") {
  const auto spec =
      ModelSpec::parse("input 2 8 8; conv 4 3 1 1; relu; maxpool; conv 6 3 2 1; relu; gap; dense 5; relu; dense 4");
  const ModelD model = ModelD::initialize(spec, 21);
  Rng rng(22);
  const TensorD batch = random_tensor<double>(rng, {3, 2, 8, 8});
  const std::vector<int> labels{0, 3, 2};
  const std::span<const int> lab(labels);
  const double h = 1e-6;
  auto close = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) <= 1e-5 * std::max({std::abs(analytic), std::abs(numeric), 1e-6}) + 1e-9;
  };

  const auto in_grad = loss_and_input_grad(model, batch, lab);
  for (int t = 0; t < 40; ++t) {
    const std::size_t i = rng.below(batch.size());
    TensorD plus = batch, minus = batch;
    plus[i] += h;
    minus[i] -= h;
    const double numeric = (loss_of(model, plus, lab) - loss_of(model, minus, lab)) / (2 * h);
    CAPTURE(i);
    CHECK(close(in_grad.grad[i], numeric));
  }

  const auto pg = loss_and_param_grads(model, batch, lab);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (model.params()[l].empty()) continue;
    for (int which = 0; which < 2; ++which)
      for (int t = 0; t < 10; ++t) {
        auto params = model.params();
        TensorD& p = which == 0 ? params[l].weight : params[l].bias;
        const std::size_t i = rng.below(p.size());
        const double base = p[i];
        p[i] = base + h;
        const double up = loss_of(ModelD(spec, params), batch, lab);
        p[i] = base - h;
        const double down = loss_of(ModelD(spec, params), batch, lab);
        const double analytic = which == 0 ? pg.grads[l].weight[i] : pg.grads[l].bias[i];
        CAPTURE(l);
        CAPTURE(which);
        CHECK(close(analytic, (up - down) / (2 * h)));
      }
  }
}

TEST_CASE("float32 gradients agree with float64") {
  for (const auto& name : builtin_spec_names()) {
    CAPTURE(name);
    const Model m = Model::initialize(builtin_spec(name), 31);
    Rng rng(32);
    const Tensor batch = random_tensor(rng, {2, 1, 28, 28});
    const std::vector<int> labels{4, 7};
    const auto g32 = loss_and_input_grad(m, batch, std::span<const int>(labels));
    const auto g64 = loss_and_input_grad(m.cast<double>(), batch.cast<double>(), std::span<const int>(labels));
    const double scale = linf_norm(g64.grad);
    CHECK(max_abs_diff(g32.grad.cast<double>(), g64.grad) <= 1e-4 * scale);
    CHECK(g32.loss == doctest::Approx(g64.loss).epsilon(1e-5));
  }
}

TEST_CASE("last-layer bias gradient has the closed form mean(softmax - onehot)") {
  const auto spec = ModelSpec::parse("input 1 5 5; conv 3 3; relu; flatten; dense 4");
  const ModelD m = ModelD::initialize(spec, 41);
  Rng rng(42);
  const TensorD batch = random_tensor<double>(rng, {5, 1, 5, 5});
  const std::vector<int> labels{0, 1, 2, 3, 1};
  const auto pg = loss_and_param_grads(m, batch, std::span<const int>(labels));
  const TensorD logits = m.forward(batch);
  for (std::size_t k = 0; k < 4; ++k) {
    double want = 0;
    for (std::size_t b = 0; b < 5; ++b) {
      double z = 0;
      for (std::size_t j = 0; j < 4; ++j) z += std::exp(logits[b * 4 + j]);
      want += std::exp(logits[b * 4 + k]) / z - (labels[b] == static_cast<int>(k) ? 1.0 : 0.0);
    }
    CHECK(pg.grads[3].bias[k] == doctest::Approx(want / 5).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
// Training and inference

TEST_CASE("learning rate zero leaves the initial weights") {
  const auto spec = ModelSpec::parse(kToySpec);
  TrainOptions opts;
  opts.epochs = 2;
  opts.learning_rate = 0.0;
  opts.seed = 5;
  const auto ckpt = train(spec, stripes(40, 1), opts);
  const Model init = Model::initialize(spec, Rng::split(5, 0).next_u64());
  for (std::size_t l = 0; l < init.params().size(); ++l) CHECK(ckpt.model.params()[l] == init.params()[l]);
}

TEST_CASE("a separable toy problem is learned perfectly") {
  TrainOptions opts;
  opts.epochs = 8;
  opts.learning_rate = 0.05;
  opts.batch_size = 8;
  std::vector<double> losses;
  const auto ckpt =
      train(ModelSpec::parse(kToySpec), stripes(200, 2), opts, [&](std::size_t, double loss) { losses.push_back(loss); });
  REQUIRE(losses.size() == 8);
  CHECK(losses.back() < losses.front());
  CHECK(accuracy(ckpt.model, stripes(100, 3)) == 1.0);
  CHECK(ckpt.metadata.at("dataset") == "stripes");
  CHECK(ckpt.metadata.at("epochs") == "8");
}

TEST_CASE("training is deterministic for a seed and changes with it") {
  const auto spec = ModelSpec::parse(kToySpec);
  const Dataset data = stripes(64, 4);
  TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 9;
  const auto a = train(spec, data, opts);
  const auto b = train(spec, data, opts);
  for (std::size_t l = 0; l < a.model.params().size(); ++l) CHECK(a.model.params()[l] == b.model.params()[l]);
  opts.seed = 10;
  const auto c = train(spec, data, opts);
  CHECK_FALSE(a.model.params()[0].weight == c.model.params()[0].weight);
}

TEST_CASE("training argument errors") {
  const auto spec = ModelSpec::parse(kToySpec);
  Dataset empty;
  CHECK_THROWS(train(spec, empty, {}));
  TrainOptions zero;
  zero.batch_size = 0;
  CHECK_THROWS(train(spec, stripes(4, 5), zero));
  Dataset wide = stripes(4, 5);
  wide.num_classes = 3;
  CHECK_THROWS(train(spec, wide, {}));
}

TEST_CASE("argmax, predict and accuracy examples") {
  const Tensor logits({3, 3}, {0, 2, 1, 5, 5, 5, -1, -2, -0.5f});
  CHECK(argmax_rows(logits) == std::vector<int>{1, 0, 2});

  // A zero model predicts class 0 for everything, so accuracy is the share of zeros.
  const Model zero = Model::zeros(ModelSpec::parse(kToySpec));
  Dataset d = stripes(10, 6);
  d.labels = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  CHECK(predict(zero, d.images) == std::vector<int>(10, 0));
  CHECK(accuracy(zero, d) == doctest::Approx(0.3));
  d.labels.assign(10, 0);
  CHECK(accuracy(zero, d) == 1.0);
  CHECK_THROWS(accuracy(zero, Dataset{}));
}
