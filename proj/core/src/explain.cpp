#include "cwt/explain.hpp"

#include <algorithm>
#include <stdexcept>

#include "cwt/data_io.hpp"
#include "cwt/image_ops.hpp"

namespace cwt {

std::size_t last_conv_layer(const ModelSpec& spec) {
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    if (std::holds_alternative<Conv2d>(spec.layers[i])) return i;
  }
  throw std::invalid_argument("model has no conv layer");
}

Heatmap grad_cam(const Model& model, const Tensor& image, int class_index, std::optional<std::size_t> layer) {
  const ModelSpec& spec = model.spec();
  const std::size_t target = layer.value_or(last_conv_layer(spec));
  if (target >= spec.layers.size() || !std::holds_alternative<Conv2d>(spec.layers[target])) {
    throw std::invalid_argument("grad_cam: layer " + std::to_string(target) + " is not a conv layer");
  }
  const std::size_t classes = model.num_classes();
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= classes) {
    throw std::out_of_range("grad_cam: class " + std::to_string(class_index) + " outside [0, " +
                            std::to_string(classes) + ")");
  }
  if (image.rank() != 3) throw std::invalid_argument("grad_cam expects a [C,H,W] image");

  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), image.shape().begin(), image.shape().end());
  const ForwardCache<float> cache = forward_cache(model, image.reshaped(batch_shape));
  Tensor seed({1, classes});
  seed[static_cast<std::size_t>(class_index)] = 1.0f;
  const Gradients<float> grads = backward(model, cache, seed, {.params = false, .outputs = true});

  const Tensor& act = cache.outputs[target + 1];  // [1,K,h,w]
  const Tensor& grad = grads.outputs[target];
  const std::size_t K = act.dim(1), h = act.dim(2), w = act.dim(3);
  Tensor cam({1, h, w});
  for (std::size_t k = 0; k < K; ++k) {
    float weight = 0.0f;
    for (std::size_t p = 0; p < h * w; ++p) weight += grad[k * h * w + p];
    weight /= static_cast<float>(h * w);
    for (std::size_t p = 0; p < h * w; ++p) cam[p] += weight * act[k * h * w + p];
  }
  for (float& v : cam.values()) v = std::max(v, 0.0f);

  Tensor up = resize(cam, image.dim(1), image.dim(2), Interpolation::Bilinear);
  const float peak = linf_norm(up);
  if (peak > 0.0f) {
    for (float& v : up.values()) v /= peak;
  }
  return {std::move(up).reshaped({image.dim(1), image.dim(2)}), target, class_index};
}

void export_heatmap(const Heatmap& map, const std::filesystem::path& path) {
  write_netpbm(path, map.values.reshaped({1, map.values.dim(0), map.values.dim(1)}));
}

void export_heatmap_overlay(const Heatmap& map, const Tensor& image, const std::filesystem::path& path) {
  const std::size_t H = map.values.dim(0), W = map.values.dim(1);
  if (image.rank() != 3 || image.dim(1) != H || image.dim(2) != W || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw std::invalid_argument("overlay image " + to_string(image.shape()) + " does not match heatmap");
  }
  Tensor rgb({3, H, W});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const float v = map.values[y * W + x];
      for (std::size_t c = 0; c < 3; ++c) {
        const float base = image.at(image.dim(0) == 1 ? 0 : c, y, x);
        rgb.at(c, y, x) = c == 0 ? (1.0f - v) * base + v : (1.0f - v) * base;
      }
    }
  }
  write_netpbm(path, rgb);
}

}  // namespace cwt
