#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cwt/tensor.hpp"

namespace cwt {

/// Labelled images, pixels in [0, 1].
struct Dataset {
  Tensor images;            ///< [B,C,H,W]
  std::vector<int> labels;  ///< one per image, in [0, num_classes)
  std::size_t num_classes = 0;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  Tensor image(std::size_t i) const { return images.slice(i); }

  /// Images at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// The first min(n, size()) images.
  Dataset head(std::size_t n) const;

  /// Throws if labels are out of range or the image count disagrees.
  void validate() const;
};

}  // namespace cwt
