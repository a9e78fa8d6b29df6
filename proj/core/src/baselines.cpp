#include "cwt/baselines.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace cwt {

void DimParams::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) throw std::invalid_argument("dim: probability must be in [0,1]");
  if (!(resize_ratio >= 1.0)) throw std::invalid_argument("dim: resize_ratio must be >= 1");
}

std::size_t dim_padded_size(std::size_t size, double ratio) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(size) * ratio - 1e-9));
}

DimTrace sample_dim(const DimParams& params, std::size_t height, std::size_t width, Rng& rng) {
  params.validate();
  DimTrace t;
  t.height = height;
  t.width = width;
  t.padded_height = dim_padded_size(height, params.resize_ratio);
  t.padded_width = dim_padded_size(width, params.resize_ratio);
  t.applied = rng.uniform01() < params.probability;
  if (!t.applied) {
    t.resized_height = height;
    t.resized_width = width;
    return t;
  }
  t.resized_height = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(height),
                                                          static_cast<std::int64_t>(t.padded_height)));
  t.resized_width = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(width),
                                                         static_cast<std::int64_t>(t.padded_width)));
  t.pad_top = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(t.padded_height - t.resized_height)));
  t.pad_left = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(t.padded_width - t.resized_width)));
  return t;
}

namespace {

void check_dims(const Shape& shape, std::size_t h, std::size_t w, const char* what) {
  if (shape.size() != 3 || shape[1] != h || shape[2] != w) {
    throw std::invalid_argument(std::string(what) + ": trace sampled for " + std::to_string(h) + "x" +
                                std::to_string(w) + ", got " + to_string(shape));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> dim_forward(const BasicTensor<T>& image, const DimTrace& t, Interpolation kernel) {
  check_dims(image.shape(), t.height, t.width, "dim_forward");
  if (!t.applied) return image;
  BasicTensor<T> x = resize(image, t.resized_height, t.resized_width, kernel);
  x = pad(x, t.pad_top, t.pad_left, t.padded_height, t.padded_width);
  return resize(x, t.height, t.width, kernel);
}

template <typename T>
BasicTensor<T> dim_vjp(const BasicTensor<T>& upstream, const DimTrace& t, Interpolation kernel) {
  check_dims(upstream.shape(), t.height, t.width, "dim_vjp");
  if (!t.applied) return upstream;
  BasicTensor<T> g = resize_vjp(upstream, t.padded_height, t.padded_width, kernel);
  g = crop(g, t.pad_top, t.pad_left, t.resized_height, t.resized_width);
  return resize_vjp(g, t.height, t.width, kernel);
}

std::string DimTrace::describe() const {
  std::ostringstream out;
  out << "applied=" << (applied ? 1 : 0) << "\n"
      << "image=" << height << "x" << width << "\n"
      << "resized=" << resized_height << "x" << resized_width << "\n"
      << "padded=" << padded_height << "x" << padded_width << "\n"
      << "pad=" << pad_top << "," << pad_left << "\n";
  return out.str();
}

double sim_factor(std::size_t index) { return std::ldexp(1.0, -static_cast<int>(index)); }

template <typename T>
std::vector<BasicTensor<T>> sim_copies(const BasicTensor<T>& image, std::size_t m) {
  if (m < 1) throw std::invalid_argument("sim: m must be >= 1");
  std::vector<BasicTensor<T>> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(mul(image, static_cast<T>(sim_factor(i))));
  return out;
}

template <typename T>
BasicTensor<T> sim_vjp(const BasicTensor<T>& upstream, std::size_t index) {
  return mul(upstream, static_cast<T>(sim_factor(index)));
}

void BsrParams::validate() const {
  if (blocks < 1) throw std::invalid_argument("bsr: blocks must be >= 1");
  if (!(max_angle_deg >= 0.0)) throw std::invalid_argument("bsr: max_angle_deg must be >= 0");
}

BsrTrace sample_bsr(const BsrParams& params, std::size_t height, std::size_t width, Rng& rng) {
  params.validate();
  BsrTrace t;
  t.grid = BlockGrid::make(height, width, params.blocks);
  const std::size_t count = t.grid.blocks.size();
  t.source.resize(count);

  // Blocks only move between cells of the same size.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t b = 0; b < count; ++b) groups[{t.grid.blocks[b].height, t.grid.blocks[b].width}].push_back(b);
  for (auto& [size, cells] : groups) {
    std::vector<std::size_t> sources = cells;
    for (std::size_t i = sources.size(); i > 1; --i) std::swap(sources[i - 1], sources[rng.below(i)]);
    for (std::size_t i = 0; i < cells.size(); ++i) t.source[cells[i]] = sources[i];
  }

  t.angle_deg.resize(count);
  for (double& a : t.angle_deg) a = rng.uniform(-params.max_angle_deg, params.max_angle_deg);
  return t;
}

template <typename T>
BasicTensor<T> bsr_forward(const BasicTensor<T>& image, const BsrTrace& t, Interpolation kernel) {
  check_dims(image.shape(), t.grid.height, t.grid.width, "bsr_forward");
  const std::vector<BasicTensor<T>> blocks = partition(image, t.grid);
  std::vector<BasicTensor<T>> placed;
  placed.reserve(blocks.size());
  for (std::size_t cell = 0; cell < blocks.size(); ++cell) {
    placed.push_back(rotate(blocks[t.source[cell]], t.angle_deg[cell], kernel));
  }
  return reassemble<T>(t.grid, placed);
}

template <typename T>
BasicTensor<T> bsr_vjp(const BasicTensor<T>& upstream, const BsrTrace& t, Interpolation kernel) {
  check_dims(upstream.shape(), t.grid.height, t.grid.width, "bsr_vjp");
  const std::vector<BasicTensor<T>> cells = partition(upstream, t.grid);
  std::vector<BasicTensor<T>> grads(cells.size());
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    grads[t.source[cell]] = rotate_vjp(cells[cell], t.angle_deg[cell], kernel);
  }
  return reassemble<T>(t.grid, grads);
}

std::string BsrTrace::describe() const {
  std::ostringstream out;
  out << "grid=" << grid.n << "x" << grid.n << "\n";
  for (std::size_t c = 0; c < source.size(); ++c) {
    out << "cell." << c << ".source=" << source[c] << "\n" << "cell." << c << ".angle_deg=" << angle_deg[c] << "\n";
  }
  return out.str();
}

#define CWT_INSTANTIATE(T)                                                                    \
  template BasicTensor<T> dim_forward(const BasicTensor<T>&, const DimTrace&, Interpolation); \
  template BasicTensor<T> dim_vjp(const BasicTensor<T>&, const DimTrace&, Interpolation);     \
  template std::vector<BasicTensor<T>> sim_copies(const BasicTensor<T>&, std::size_t);        \
  template BasicTensor<T> sim_vjp(const BasicTensor<T>&, std::size_t);                        \
  template BasicTensor<T> bsr_forward(const BasicTensor<T>&, const BsrTrace&, Interpolation); \
  template BasicTensor<T> bsr_vjp(const BasicTensor<T>&, const BsrTrace&, Interpolation);

CWT_INSTANTIATE(float)
CWT_INSTANTIATE(double)
#undef CWT_INSTANTIATE

}  // namespace cwt
