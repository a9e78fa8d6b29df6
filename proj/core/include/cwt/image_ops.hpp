#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "cwt/tensor.hpp"

namespace cwt {

enum class Interpolation { Bilinear, Nearest };

std::string_view to_string(Interpolation kernel) noexcept;
Interpolation parse_interpolation(std::string_view name);

/// A fixed, sparse linear map between two spatial planes, applied to every
/// channel of a [C,h,w] image independently.
///
/// Each output pixel is a weighted sum of at most a handful of input pixels
/// ("taps"). apply() evaluates the map, apply_transpose() its exact adjoint.
/// An output pixel whose only tap has weight 1 reproduces the input bit-for-bit.
template <typename T>
class SpatialMap {
 public:
  struct Tap {
    std::uint32_t source;
    T weight;
  };

  SpatialMap(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);

  /// Appends the taps for the next output pixel (row-major order).
  void push_pixel(std::span<const Tap> taps);

  BasicTensor<T> apply(const BasicTensor<T>& image) const;
  BasicTensor<T> apply_transpose(const BasicTensor<T>& upstream) const;

  std::size_t in_height() const noexcept { return in_h_; }
  std::size_t in_width() const noexcept { return in_w_; }
  std::size_t out_height() const noexcept { return out_h_; }
  std::size_t out_width() const noexcept { return out_w_; }

 private:
  std::size_t in_h_, in_w_, out_h_, out_w_;
  std::vector<std::uint32_t> row_start_;
  std::vector<Tap> taps_;
};

/// Resampling map with half-pixel centers: source coordinate
/// s = (d + 0.5) * in / out - 0.5, clamped to [0, in - 1].
template <typename T>
SpatialMap<T> resize_map(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                         Interpolation kernel);

/// Rotation about the plane center ((h-1)/2, (w-1)/2) by inverse mapping.
/// Source samples outside the plane read as zero.
template <typename T>
SpatialMap<T> rotation_map(std::size_t h, std::size_t w, double angle_deg, Interpolation kernel);

template <typename T>
BasicTensor<T> resize(const BasicTensor<T>& image, std::size_t out_h, std::size_t out_w, Interpolation kernel);
template <typename T>
BasicTensor<T> resize_vjp(const BasicTensor<T>& upstream, std::size_t in_h, std::size_t in_w, Interpolation kernel);

template <typename T>
BasicTensor<T> rotate(const BasicTensor<T>& image, double angle_deg, Interpolation kernel);
template <typename T>
BasicTensor<T> rotate_vjp(const BasicTensor<T>& upstream, double angle_deg, Interpolation kernel);

/// Window [oy, oy+out_h) x [ox, ox+out_w) of a [C,h,w] image.
template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& image, std::size_t oy, std::size_t ox, std::size_t out_h,
                    std::size_t out_w);
/// Adjoint of crop: upstream written into the window of a zero [C,in_h,in_w] tensor.
template <typename T>
BasicTensor<T> crop_vjp(const BasicTensor<T>& upstream, std::size_t oy, std::size_t ox, std::size_t in_h,
                        std::size_t in_w);

/// Zero tensor [C,out_h,out_w] with `image` written at (oy, ox). Adjoint of crop.
template <typename T>
BasicTensor<T> pad(const BasicTensor<T>& image, std::size_t oy, std::size_t ox, std::size_t out_h,
                   std::size_t out_w) {
  return crop_vjp(image, oy, ox, out_h, out_w);
}

struct Block {
  std::size_t y, x, height, width;
  friend bool operator==(const Block&, const Block&) = default;
};

/// n x n tiling of an H x W plane. Every block row except the last is floor(H/n)
/// tall; the last takes the remainder. Columns likewise. Blocks are row-major.
struct BlockGrid {
  std::size_t n = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Block> blocks;

  static BlockGrid make(std::size_t height, std::size_t width, std::size_t n);
  friend bool operator==(const BlockGrid&, const BlockGrid&) = default;
};

template <typename T>
BasicTensor<T> extract_block(const BasicTensor<T>& image, const Block& block);

template <typename T>
std::vector<BasicTensor<T>> partition(const BasicTensor<T>& image, const BlockGrid& grid);

/// Inverse of partition. Throws naming the offending block on a size mismatch.
template <typename T>
BasicTensor<T> reassemble(const BlockGrid& grid, std::span<const BasicTensor<T>> blocks);

}  // namespace cwt
