#include <fstream>

#include "cwt/data_io.hpp"
#include "cwt/explain.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cwt;
using test::random_tensor;

namespace {

// conv 1x1 with channel 0 = x and channel 1 = -x, then relu, gap, identity dense.
// Logit c is the mean of relu(channel c).
Model signed_channels() {
  const auto spec = ModelSpec::parse("input 1 4 4; conv 2 1; relu; gap; dense 2");
  std::vector<LayerParams<float>> params(4);
  params[0] = {Tensor({2, 1, 1, 1}, {1.0f, -1.0f}), Tensor({2})};
  params[3] = {Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2})};
  return Model(spec, params);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("grad-cam of a single positive channel is the normalised input") {
  const Model m = signed_channels();
  Rng rng(1);
  const Tensor x = random_tensor(rng, {1, 4, 4}, 0.1, 1.0);
  const Heatmap h = grad_cam(m, x, 0);
  CHECK(h.layer == 0);
  CHECK(h.class_index == 0);
  REQUIRE(h.values.shape() == Shape{4, 4});
  const float peak = linf_norm(x);
  for (std::size_t i = 0; i < 16; ++i) CHECK(h.values[i] == doctest::Approx(x[i] / peak).epsilon(1e-6));
}

TEST_CASE("grad-cam of a class with no positive evidence is all zero") {
  const Model m = signed_channels();
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 4, 4}, 0.1, 1.0);
  const Heatmap h = grad_cam(m, x, 1);
  CHECK(l1_norm(h.values) == 0.0f);
}

TEST_CASE("grad-cam weights are spatial gradient means") {
  // Mixed-sign input: channel 0 is active only where x > 0, so its weight is
  // (#positive / 16) / 16 and the map is relu(weight * x), normalised.
  const Model m = signed_channels();
  const Tensor x({1, 4, 4}, {0.5f, -0.2f, 0.3f, -0.1f, 0.0f, 0.8f, -0.6f, 0.1f,  //
                             0.2f, 0.2f, -0.9f, 0.4f, -0.3f, 0.7f, 0.6f, -0.5f});
  const Heatmap h0 = grad_cam(m, x, 0);
  const Heatmap h1 = grad_cam(m, x, 1);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(h0.values[i] == doctest::Approx(std::max(x[i], 0.0f) / 0.8f).epsilon(1e-6));
    CHECK(h1.values[i] == doctest::Approx(std::max(-x[i], 0.0f) / 0.9f).epsilon(1e-6));
  }
}

TEST_CASE("grad-cam on coarse layers is resized to the input and in [0,1]") {
  const Model m = Model::initialize(builtin_spec("cnn2"), 3);
  Rng rng(3);
  const Tensor x = random_tensor(rng, {1, 28, 28});
  for (std::size_t layer : {0u, 3u}) {
    for (int c = 0; c < 10; c += 3) {
      const Heatmap h = grad_cam(m, x, c, layer);
      CHECK(h.values.shape() == Shape{28, 28});
      CHECK(h.layer == layer);
      const float peak = linf_norm(h.values);
      CHECK((peak == 1.0f || peak == 0.0f));
      for (float v : h.values.values()) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
  CHECK(last_conv_layer(m.spec()) == 3);
  CHECK(grad_cam(m, x, 4).layer == 3);
}

TEST_CASE("grad-cam argument errors") {
  const Model m = Model::initialize(builtin_spec("tiny"), 4);
  const Tensor x({1, 28, 28}, 0.5f);
  CHECK_THROWS_AS(grad_cam(m, x, 10), std::out_of_range);
  CHECK_THROWS_AS(grad_cam(m, x, -1), std::out_of_range);
  CHECK_THROWS_AS(grad_cam(m, x, 0, 1), std::invalid_argument);  // relu
  CHECK_THROWS_AS(grad_cam(m, x, 0, 99), std::invalid_argument);
  CHECK_THROWS_AS(grad_cam(m, Tensor({1, 1, 28, 28}), 0), std::invalid_argument);
  CHECK_THROWS(last_conv_layer(ModelSpec::parse("input 1 4 4; flatten; dense 2")));
}

TEST_CASE("heatmap export writes P5 and a P6 overlay") {
  test::TempDir dir;
  Heatmap h{Tensor({2, 3}, {0.0f, 0.5f, 1.0f, 0.25f, 0.75f, 0.1f}), 0, 0};
  export_heatmap(h, dir / "h.pgm");
  const std::string bytes = read_bytes(dir / "h.pgm");
  CHECK(bytes.substr(0, 3) == "P5\n");
  const std::string payload = bytes.substr(bytes.size() - 6);
  CHECK(std::vector<unsigned char>(payload.begin(), payload.end()) ==
        std::vector<unsigned char>{0, 128, 255, 64, 191, 26});
  const Tensor back = read_netpbm(dir / "h.pgm");
  CHECK(back.shape() == Shape{1, 2, 3});

  const Tensor gray({1, 2, 3}, 0.4f);
  export_heatmap_overlay(h, gray, dir / "o.ppm");
  const Tensor rgb = read_netpbm(dir / "o.ppm");
  REQUIRE(rgb.shape() == Shape{3, 2, 3});
  CHECK(rgb.at(0, 0, 0) == doctest::Approx(102 / 255.0f));  // v = 0 keeps the image
  CHECK(rgb.at(1, 0, 0) == doctest::Approx(102 / 255.0f));
  CHECK(rgb.at(0, 0, 2) == 1.0f);  // v = 1 is pure red
  CHECK(rgb.at(1, 0, 2) == 0.0f);
  CHECK(rgb.at(2, 0, 2) == 0.0f);
  CHECK_THROWS(export_heatmap_overlay(h, Tensor({2, 2, 3}), dir / "bad.ppm"));
  CHECK_THROWS(export_heatmap_overlay(h, Tensor({1, 3, 2}), dir / "bad.ppm"));
}
