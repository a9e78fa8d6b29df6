#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "cwt/nn.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

/// Grad-CAM attention map at input resolution.
struct Heatmap {
  Tensor values;  ///< [H,W] in [0,1]; max is exactly 1 unless the map is all zero
  std::size_t layer = 0;
  int class_index = 0;
};

/// Index of the last conv layer. Throws if the model has none.
std::size_t last_conv_layer(const ModelSpec& spec);

/// Channel weights are the spatial mean of d(logit)/d(activation); the map is
/// relu(sum_k weight_k * activation_k) of the chosen conv layer's output,
/// bilinearly resized to the image and divided by its maximum.
Heatmap grad_cam(const Model& model, const Tensor& image, int class_index,
                 std::optional<std::size_t> layer = std::nullopt);

/// P5 grayscale, byte = round(255 v).
void export_heatmap(const Heatmap& map, const std::filesystem::path& path);

/// P6 overlay: the heatmap pushes the red channel of `image` toward 1 and dims
/// green and blue by the same amount. `image` is [1,H,W] or [3,H,W].
void export_heatmap_overlay(const Heatmap& map, const Tensor& image, const std::filesystem::path& path);

}  // namespace cwt
