#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cwt/image_ops.hpp"
#include "cwt/rng.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

// ---------------------------------------------------------------------------
// Diverse inputs: random enlarge, random zero pad, resize back to H x W.

struct DimParams {
  double probability = 0.5;   ///< chance of transforming; otherwise identity
  double resize_ratio = 1.1;  ///< padded canvas is ceil(ratio * H) x ceil(ratio * W)
  Interpolation kernel = Interpolation::Bilinear;

  void validate() const;
};

struct DimTrace {
  bool applied = false;
  std::size_t height = 0, width = 0;
  std::size_t resized_height = 0, resized_width = 0;  ///< in [H, padded]
  std::size_t padded_height = 0, padded_width = 0;
  std::size_t pad_top = 0, pad_left = 0;

  std::string describe() const;
};

/// ceil(ratio * size), robust to products like 1.1 * 10 = 11.000000000000002.
std::size_t dim_padded_size(std::size_t size, double ratio);

DimTrace sample_dim(const DimParams& params, std::size_t height, std::size_t width, Rng& rng);

template <typename T>
BasicTensor<T> dim_forward(const BasicTensor<T>& image, const DimTrace& trace, Interpolation kernel);
template <typename T>
BasicTensor<T> dim_vjp(const BasicTensor<T>& upstream, const DimTrace& trace, Interpolation kernel);

// ---------------------------------------------------------------------------
// Scale invariance: copy i is the image times 2^-i.

/// 2^-index.
double sim_factor(std::size_t index);

/// The m scaled copies of `image`; m >= 1.
template <typename T>
std::vector<BasicTensor<T>> sim_copies(const BasicTensor<T>& image, std::size_t m);

/// Adjoint for copy `index`: upstream * 2^-index.
template <typename T>
BasicTensor<T> sim_vjp(const BasicTensor<T>& upstream, std::size_t index);

// ---------------------------------------------------------------------------
// Block shuffle and rotation.

struct BsrParams {
  std::size_t blocks = 2;
  double max_angle_deg = 24.0;
  Interpolation kernel = Interpolation::Bilinear;

  void validate() const;
};

struct BsrTrace {
  BlockGrid grid;
  std::vector<std::size_t> source;  ///< source[cell] = block moved into that cell
  std::vector<double> angle_deg;    ///< per destination cell

  std::string describe() const;
};

/// Shuffles blocks uniformly among cells of identical size, then draws one
/// independent angle per cell.
BsrTrace sample_bsr(const BsrParams& params, std::size_t height, std::size_t width, Rng& rng);

template <typename T>
BasicTensor<T> bsr_forward(const BasicTensor<T>& image, const BsrTrace& trace, Interpolation kernel);
template <typename T>
BasicTensor<T> bsr_vjp(const BasicTensor<T>& upstream, const BsrTrace& trace, Interpolation kernel);

}  // namespace cwt
