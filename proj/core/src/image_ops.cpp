#include "cwt/image_ops.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cwt {

std::string_view to_string(Interpolation kernel) noexcept {
  return kernel == Interpolation::Bilinear ? "bilinear" : "nearest";
}

Interpolation parse_interpolation(std::string_view name) {
  if (name == "bilinear") return Interpolation::Bilinear;
  if (name == "nearest") return Interpolation::Nearest;
  throw std::invalid_argument("unknown interpolation kernel '" + std::string(name) + "'");
}

namespace {

void require_image(const Shape& shape, const char* what) {
  if (shape.size() != 3) throw std::invalid_argument(std::string(what) + ": expected [C,H,W], got " + to_string(shape));
}

struct AxisTap {
  std::size_t index[2];
  double weight[2];
  int count;
};

// Snaps coordinates that are integral up to trig round-off, so e.g. a 180 degree
// rotation lands exactly on pixel centers.
double snap(double s) {
  const double r = std::round(s);
  return std::abs(s - r) < 1e-9 ? r : s;
}

std::vector<AxisTap> axis_taps(std::size_t in, std::size_t out, Interpolation kernel) {
  std::vector<AxisTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t d = 0; d < out; ++d) {
    const double s = std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, last);
    AxisTap& t = taps[d];
    if (kernel == Interpolation::Nearest) {
      t = {{static_cast<std::size_t>(std::round(s)), 0}, {1.0, 0.0}, 1};
      continue;
    }
    const double lo = std::floor(s);
    const double frac = s - lo;
    const auto i0 = static_cast<std::size_t>(lo);
    if (frac == 0.0 || i0 + 1 >= in) {
      t = {{i0, 0}, {1.0, 0.0}, 1};
    } else {
      t = {{i0, i0 + 1}, {1.0 - frac, frac}, 2};
    }
  }
  return taps;
}

}  // namespace

template <typename T>
SpatialMap<T>::SpatialMap(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w)
    : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w) {
  if (in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0) throw std::invalid_argument("spatial map with empty plane");
  row_start_.reserve(out_h * out_w + 1);
  row_start_.push_back(0);
}

template <typename T>
void SpatialMap<T>::push_pixel(std::span<const Tap> taps) {
  if (row_start_.size() > out_h_ * out_w_) throw std::logic_error("spatial map already complete");
  for (const Tap& t : taps) {
    if (t.source >= in_h_ * in_w_) throw std::out_of_range("spatial map tap outside source plane");
    taps_.push_back(t);
  }
  row_start_.push_back(static_cast<std::uint32_t>(taps_.size()));
}

template <typename T>
BasicTensor<T> SpatialMap<T>::apply(const BasicTensor<T>& image) const {
  require_image(image.shape(), "spatial map");
  if (image.dim(1) != in_h_ || image.dim(2) != in_w_) {
    throw std::invalid_argument("spatial map expects plane " + std::to_string(in_h_) + "x" + std::to_string(in_w_) +
                                ", got " + to_string(image.shape()));
  }
  const std::size_t channels = image.dim(0);
  const std::size_t in_plane = in_h_ * in_w_;
  const std::size_t out_plane = out_h_ * out_w_;
  BasicTensor<T> out({channels, out_h_, out_w_});
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = image.data() + c * in_plane;
    T* dst = out.data() + c * out_plane;
    for (std::size_t p = 0; p < out_plane; ++p) {
      const std::uint32_t begin = row_start_[p], end = row_start_[p + 1];
      if (begin == end) continue;
      T acc = taps_[begin].weight * src[taps_[begin].source];
      for (std::uint32_t k = begin + 1; k < end; ++k) acc += taps_[k].weight * src[taps_[k].source];
      dst[p] = acc;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> SpatialMap<T>::apply_transpose(const BasicTensor<T>& upstream) const {
  require_image(upstream.shape(), "spatial map adjoint");
  if (upstream.dim(1) != out_h_ || upstream.dim(2) != out_w_) {
    throw std::invalid_argument("spatial map adjoint expects plane " + std::to_string(out_h_) + "x" +
                                std::to_string(out_w_) + ", got " + to_string(upstream.shape()));
  }
  const std::size_t channels = upstream.dim(0);
  const std::size_t in_plane = in_h_ * in_w_;
  const std::size_t out_plane = out_h_ * out_w_;
  BasicTensor<T> out({channels, in_h_, in_w_});
  for (std::size_t c = 0; c < channels; ++c) {
    const T* up = upstream.data() + c * out_plane;
    T* dst = out.data() + c * in_plane;
    for (std::size_t p = 0; p < out_plane; ++p) {
      for (std::uint32_t k = row_start_[p]; k < row_start_[p + 1]; ++k) dst[taps_[k].source] += taps_[k].weight * up[p];
    }
  }
  return out;
}

template <typename T>
SpatialMap<T> resize_map(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                         Interpolation kernel) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize to an empty size");
  SpatialMap<T> map(in_h, in_w, out_h, out_w);
  const auto rows = axis_taps(in_h, out_h, kernel);
  const auto cols = axis_taps(in_w, out_w, kernel);
  std::array<typename SpatialMap<T>::Tap, 4> taps{};
  for (const AxisTap& r : rows) {
    for (const AxisTap& c : cols) {
      int n = 0;
      for (int a = 0; a < r.count; ++a) {
        for (int b = 0; b < c.count; ++b) {
          taps[n++] = {static_cast<std::uint32_t>(r.index[a] * in_w + c.index[b]),
                       static_cast<T>(r.weight[a] * c.weight[b])};
        }
      }
      map.push_pixel(std::span(taps.data(), static_cast<std::size_t>(n)));
    }
  }
  return map;
}

template <typename T>
SpatialMap<T> rotation_map(std::size_t h, std::size_t w, double angle_deg, Interpolation kernel) {
  SpatialMap<T> map(h, w, h, w);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const auto hi = static_cast<double>(h), wi = static_cast<double>(w);
  std::array<typename SpatialMap<T>::Tap, 4> taps{};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sx = snap(cx + cos_t * dx + sin_t * dy);
      const double sy = snap(cy - sin_t * dx + cos_t * dy);
      int n = 0;
      if (kernel == Interpolation::Nearest) {
        const double ry = std::round(sy), rx = std::round(sx);
        if (ry >= 0 && ry < hi && rx >= 0 && rx < wi) {
          taps[n++] = {static_cast<std::uint32_t>(static_cast<std::size_t>(ry) * w + static_cast<std::size_t>(rx)), T{1}};
        }
      } else {
        const double y0 = std::floor(sy), x0 = std::floor(sx);
        const double fy = sy - y0, fx = sx - x0;
        const double wy[2] = {1.0 - fy, fy}, wx[2] = {1.0 - fx, fx};
        for (int a = 0; a < 2; ++a) {
          const double yy = y0 + a;
          if (wy[a] == 0.0 || yy < 0 || yy >= hi) continue;
          for (int b = 0; b < 2; ++b) {
            const double xx = x0 + b;
            if (wx[b] == 0.0 || xx < 0 || xx >= wi) continue;
            taps[n++] = {static_cast<std::uint32_t>(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)),
                         static_cast<T>(wy[a] * wx[b])};
          }
        }
      }
      map.push_pixel(std::span(taps.data(), static_cast<std::size_t>(n)));
    }
  }
  return map;
}

template <typename T>
BasicTensor<T> resize(const BasicTensor<T>& image, std::size_t out_h, std::size_t out_w, Interpolation kernel) {
  require_image(image.shape(), "resize");
  if (out_h == image.dim(1) && out_w == image.dim(2)) return image;
  return resize_map<T>(image.dim(1), image.dim(2), out_h, out_w, kernel).apply(image);
}

template <typename T>
BasicTensor<T> resize_vjp(const BasicTensor<T>& upstream, std::size_t in_h, std::size_t in_w, Interpolation kernel) {
  require_image(upstream.shape(), "resize_vjp");
  if (in_h == upstream.dim(1) && in_w == upstream.dim(2)) return upstream;
  return resize_map<T>(in_h, in_w, upstream.dim(1), upstream.dim(2), kernel).apply_transpose(upstream);
}

template <typename T>
BasicTensor<T> rotate(const BasicTensor<T>& image, double angle_deg, Interpolation kernel) {
  require_image(image.shape(), "rotate");
  if (angle_deg == 0.0) return image;
  return rotation_map<T>(image.dim(1), image.dim(2), angle_deg, kernel).apply(image);
}

template <typename T>
BasicTensor<T> rotate_vjp(const BasicTensor<T>& upstream, double angle_deg, Interpolation kernel) {
  require_image(upstream.shape(), "rotate_vjp");
  if (angle_deg == 0.0) return upstream;
  return rotation_map<T>(upstream.dim(1), upstream.dim(2), angle_deg, kernel).apply_transpose(upstream);
}

template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& image, std::size_t oy, std::size_t ox, std::size_t out_h,
                    std::size_t out_w) {
  require_image(image.shape(), "crop");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (out_h == 0 || out_w == 0 || oy + out_h > h || ox + out_w > w) {
    throw std::out_of_range("crop window " + std::to_string(out_h) + "x" + std::to_string(out_w) + " at (" +
                            std::to_string(oy) + "," + std::to_string(ox) + ") exceeds " + to_string(image.shape()));
  }
  if (out_h == h && out_w == w) return image;
  BasicTensor<T> out({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < out_h; ++y)
      std::copy_n(&image.at(c, oy + y, ox), out_w, &out.at(c, y, 0));
  return out;
}

template <typename T>
BasicTensor<T> crop_vjp(const BasicTensor<T>& upstream, std::size_t oy, std::size_t ox, std::size_t in_h,
                        std::size_t in_w) {
  require_image(upstream.shape(), "crop_vjp");
  const std::size_t channels = upstream.dim(0), h = upstream.dim(1), w = upstream.dim(2);
  if (oy + h > in_h || ox + w > in_w) {
    throw std::out_of_range("crop_vjp window exceeds " + std::to_string(in_h) + "x" + std::to_string(in_w));
  }
  if (h == in_h && w == in_w) return upstream;
  BasicTensor<T> out({channels, in_h, in_w});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(&upstream.at(c, y, 0), w, &out.at(c, oy + y, ox));
  return out;
}

BlockGrid BlockGrid::make(std::size_t height, std::size_t width, std::size_t n) {
  if (n == 0) throw std::invalid_argument("block grid needs n >= 1");
  if (n > std::min(height, width)) {
    throw std::invalid_argument("cannot split " + std::to_string(height) + "x" + std::to_string(width) + " into " +
                                std::to_string(n) + "x" + std::to_string(n) + " blocks");
  }
  BlockGrid grid{n, height, width, {}};
  const std::size_t bh = height / n, bw = width / n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = i + 1 == n ? height - bh * (n - 1) : bh;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t w = j + 1 == n ? width - bw * (n - 1) : bw;
      grid.blocks.push_back({i * bh, j * bw, h, w});
    }
  }
  return grid;
}

template <typename T>
BasicTensor<T> extract_block(const BasicTensor<T>& image, const Block& block) {
  return crop(image, block.y, block.x, block.height, block.width);
}

template <typename T>
std::vector<BasicTensor<T>> partition(const BasicTensor<T>& image, const BlockGrid& grid) {
  require_image(image.shape(), "partition");
  if (image.dim(1) != grid.height || image.dim(2) != grid.width) {
    throw std::invalid_argument("grid for " + std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                                " applied to image " + to_string(image.shape()));
  }
  std::vector<BasicTensor<T>> blocks;
  blocks.reserve(grid.blocks.size());
  for (const Block& b : grid.blocks) blocks.push_back(extract_block(image, b));
  return blocks;
}

template <typename T>
BasicTensor<T> reassemble(const BlockGrid& grid, std::span<const BasicTensor<T>> blocks) {
  if (blocks.size() != grid.blocks.size()) {
    throw std::invalid_argument("reassemble: expected " + std::to_string(grid.blocks.size()) + " blocks, got " +
                                std::to_string(blocks.size()));
  }
  const std::size_t channels = blocks.front().rank() == 3 ? blocks.front().dim(0) : 0;
  BasicTensor<T> out({std::max<std::size_t>(channels, 1), grid.height, grid.width});
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Block& cell = grid.blocks[k];
    const BasicTensor<T>& b = blocks[k];
    if (b.rank() != 3 || b.dim(0) != channels || b.dim(1) != cell.height || b.dim(2) != cell.width) {
      throw std::invalid_argument("reassemble: block " + std::to_string(k) + " has shape " + to_string(b.shape()) +
                                  ", cell is " + std::to_string(cell.height) + "x" + std::to_string(cell.width));
    }
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < cell.height; ++y)
        std::copy_n(&b.at(c, y, 0), cell.width, &out.at(c, cell.y + y, cell.x));
  }
  return out;
}

#define CWT_INSTANTIATE(T)                                                                                          \
  template class SpatialMap<T>;                                                                                     \
  template SpatialMap<T> resize_map<T>(std::size_t, std::size_t, std::size_t, std::size_t, Interpolation);          \
  template SpatialMap<T> rotation_map<T>(std::size_t, std::size_t, double, Interpolation);                          \
  template BasicTensor<T> resize(const BasicTensor<T>&, std::size_t, std::size_t, Interpolation);                   \
  template BasicTensor<T> resize_vjp(const BasicTensor<T>&, std::size_t, std::size_t, Interpolation);               \
  template BasicTensor<T> rotate(const BasicTensor<T>&, double, Interpolation);                                     \
  template BasicTensor<T> rotate_vjp(const BasicTensor<T>&, double, Interpolation);                                 \
  template BasicTensor<T> crop(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);          \
  template BasicTensor<T> crop_vjp(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);      \
  template BasicTensor<T> extract_block(const BasicTensor<T>&, const Block&);                                       \
  template std::vector<BasicTensor<T>> partition(const BasicTensor<T>&, const BlockGrid&);                          \
  template BasicTensor<T> reassemble(const BlockGrid&, std::span<const BasicTensor<T>>);

CWT_INSTANTIATE(float)
CWT_INSTANTIATE(double)
#undef CWT_INSTANTIATE

}  // namespace cwt
