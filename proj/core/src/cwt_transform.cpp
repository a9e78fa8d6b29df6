#include "cwt/cwt_transform.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cwt {

void CwtParams::validate() const {
  if (blocks < 1) throw std::invalid_argument("cwt: blocks must be >= 1");
  if (num_copies < 1) throw std::invalid_argument("cwt: num_copies must be >= 1");
  if (!(scale_min >= 1.0)) throw std::invalid_argument("cwt: scale_min must be >= 1.0");
  if (!(scale_max >= scale_min)) throw std::invalid_argument("cwt: scale_max must be >= scale_min");
  if (!(max_angle_deg >= 0.0)) throw std::invalid_argument("cwt: max_angle_deg must be >= 0");
  if (rotated_blocks > blocks * blocks) {
    throw std::invalid_argument("cwt: rotated_blocks " + std::to_string(rotated_blocks) + " exceeds " +
                                std::to_string(blocks * blocks) + " blocks");
  }
}

namespace {

// Shrunk size is kept >= 1 so a one-pixel block survives pre-interpolation.
std::size_t shrink(std::size_t size, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(size) / scale)));
}

std::size_t enlarge(std::size_t size, double scale) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(size) * scale));
}

void check_trace(const Shape& shape, const CwtCopyTrace& trace, const CwtParams& params, const char* what) {
  if (shape.size() != 3 || shape[1] != trace.grid.height || shape[2] != trace.grid.width) {
    throw std::invalid_argument(std::string(what) + ": trace sampled for " + std::to_string(trace.grid.height) + "x" +
                                std::to_string(trace.grid.width) + ", got " + to_string(shape));
  }
  if (trace.grid.n != params.blocks || trace.blocks.size() != trace.grid.blocks.size()) {
    throw std::invalid_argument(std::string(what) + ": trace does not match params (blocks=" +
                                std::to_string(params.blocks) + ")");
  }
}

}  // namespace

CwtCopyTrace sample_cwt_copy(const CwtParams& params, std::size_t height, std::size_t width, Rng& rng) {
  params.validate();
  CwtCopyTrace trace;
  trace.grid = BlockGrid::make(height, width, params.blocks);
  const std::size_t count = trace.grid.blocks.size();
  trace.blocks.resize(count);

  for (std::size_t b = 0; b < count; ++b) {
    const Block& cell = trace.grid.blocks[b];
    CwtBlockTrace& t = trace.blocks[b];
    t.scale = rng.uniform(params.scale_min, params.scale_max);
    t.shrunk_height = shrink(cell.height, t.scale);
    t.shrunk_width = shrink(cell.width, t.scale);
    t.enlarged_height = enlarge(cell.height, t.scale);
    t.enlarged_width = enlarge(cell.width, t.scale);
  }

  trace.rotated = sample_without_replacement(rng, count, params.rotated_blocks);
  for (std::size_t b : trace.rotated) {
    trace.blocks[b].rotated = true;
    trace.blocks[b].angle_deg = rng.uniform(-params.max_angle_deg, params.max_angle_deg);
  }

  for (std::size_t b = 0; b < count; ++b) {
    const Block& cell = trace.grid.blocks[b];
    CwtBlockTrace& t = trace.blocks[b];
    t.offset_y = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(t.enlarged_height - cell.height)));
    t.offset_x = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(t.enlarged_width - cell.width)));
  }
  return trace;
}

CwtTrace sample_cwt(const CwtParams& params, std::size_t height, std::size_t width, Rng& rng) {
  params.validate();
  CwtTrace trace;
  trace.copies.reserve(params.num_copies);
  for (std::size_t i = 0; i < params.num_copies; ++i) {
    Rng stream = rng.split(i);
    trace.copies.push_back(sample_cwt_copy(params, height, width, stream));
  }
  return trace;
}

template <typename T>
BasicTensor<T> cwt_forward(const BasicTensor<T>& image, const CwtCopyTrace& trace, const CwtParams& params) {
  check_trace(image.shape(), trace, params, "cwt_forward");
  std::vector<BasicTensor<T>> blocks = partition(image, trace.grid);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& cell = trace.grid.blocks[b];
    const CwtBlockTrace& t = trace.blocks[b];
    BasicTensor<T> x = std::move(blocks[b]);
    if (params.pre_interpolation) x = resize(x, t.shrunk_height, t.shrunk_width, params.kernel);
    x = resize(x, t.enlarged_height, t.enlarged_width, params.kernel);
    if (t.rotated) x = rotate(x, t.angle_deg, params.kernel);
    blocks[b] = crop(x, t.offset_y, t.offset_x, cell.height, cell.width);
  }
  return reassemble<T>(trace.grid, blocks);
}

template <typename T>
BasicTensor<T> cwt_vjp(const BasicTensor<T>& upstream, const CwtCopyTrace& trace, const CwtParams& params) {
  check_trace(upstream.shape(), trace, params, "cwt_vjp");
  std::vector<BasicTensor<T>> grads = partition(upstream, trace.grid);
  for (std::size_t b = 0; b < grads.size(); ++b) {
    const Block& cell = trace.grid.blocks[b];
    const CwtBlockTrace& t = trace.blocks[b];
    BasicTensor<T> g = crop_vjp(grads[b], t.offset_y, t.offset_x, t.enlarged_height, t.enlarged_width);
    if (t.rotated) g = rotate_vjp(g, t.angle_deg, params.kernel);
    if (params.pre_interpolation) {
      g = resize_vjp(g, t.shrunk_height, t.shrunk_width, params.kernel);
      g = resize_vjp(g, cell.height, cell.width, params.kernel);
    } else {
      g = resize_vjp(g, cell.height, cell.width, params.kernel);
    }
    grads[b] = std::move(g);
  }
  return reassemble<T>(trace.grid, grads);
}

std::string CwtCopyTrace::describe() const {
  std::ostringstream out;
  out << "grid=" << grid.n << "x" << grid.n << "\n";
  out << "image=" << grid.height << "x" << grid.width << "\n";
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const CwtBlockTrace& t = blocks[b];
    const std::string p = "block." + std::to_string(b) + ".";
    out << p << "scale=" << t.scale << "\n"
        << p << "shrunk=" << t.shrunk_height << "x" << t.shrunk_width << "\n"
        << p << "enlarged=" << t.enlarged_height << "x" << t.enlarged_width << "\n"
        << p << "rotated=" << (t.rotated ? 1 : 0) << "\n"
        << p << "angle_deg=" << t.angle_deg << "\n"
        << p << "offset=" << t.offset_y << "," << t.offset_x << "\n";
  }
  return out.str();
}

template BasicTensor<float> cwt_forward(const BasicTensor<float>&, const CwtCopyTrace&, const CwtParams&);
template BasicTensor<double> cwt_forward(const BasicTensor<double>&, const CwtCopyTrace&, const CwtParams&);
template BasicTensor<float> cwt_vjp(const BasicTensor<float>&, const CwtCopyTrace&, const CwtParams&);
template BasicTensor<double> cwt_vjp(const BasicTensor<double>&, const CwtCopyTrace&, const CwtParams&);

}  // namespace cwt
