#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cwt/image_ops.hpp"
#include "cwt/rng.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

/// Configuration of the component-wise transformation.
struct CwtParams {
  std::size_t blocks = 2;          ///< grid is blocks x blocks
  std::size_t num_copies = 20;     ///< transformed copies averaged per gradient
  double scale_min = 1.0;
  double scale_max = 1.3;
  double max_angle_deg = 26.0;
  std::size_t rotated_blocks = 2;  ///< blocks rotated per copy
  Interpolation kernel = Interpolation::Bilinear;
  bool pre_interpolation = true;   ///< shrink before enlarging

  /// Throws std::invalid_argument naming the first violated bound.
  void validate() const;
};

/// Sampled randomness for one block of one copy.
struct CwtBlockTrace {
  double scale = 1.0;
  std::size_t shrunk_height = 0, shrunk_width = 0;      // floor(h / s), floor(w / s)
  std::size_t enlarged_height = 0, enlarged_width = 0;  // floor(h * s), floor(w * s)
  bool rotated = false;
  double angle_deg = 0.0;
  std::size_t offset_y = 0, offset_x = 0;  // crop window inside the enlarged block
};

/// Everything needed to replay one transformed copy, forward and backward.
struct CwtCopyTrace {
  BlockGrid grid;
  std::vector<CwtBlockTrace> blocks;   // grid order
  std::vector<std::size_t> rotated;    // sorted block indices with rotated == true

  /// key=value lines, for debugging only.
  std::string describe() const;
};

struct CwtTrace {
  std::vector<CwtCopyTrace> copies;
};

/// Samples one copy: per-block scales, k rotated blocks with their angles, and
/// crop offsets uniform over the valid window range.
CwtCopyTrace sample_cwt_copy(const CwtParams& params, std::size_t height, std::size_t width, Rng& rng);

/// params.num_copies copies; copy i draws from rng.split(i).
CwtTrace sample_cwt(const CwtParams& params, std::size_t height, std::size_t width, Rng& rng);

/// Applies one sampled copy to a [C,H,W] image. Linear in the image for a fixed trace.
template <typename T>
BasicTensor<T> cwt_forward(const BasicTensor<T>& image, const CwtCopyTrace& trace, const CwtParams& params);

/// Vector-Jacobian product of cwt_forward for the same trace.
template <typename T>
BasicTensor<T> cwt_vjp(const BasicTensor<T>& upstream, const CwtCopyTrace& trace, const CwtParams& params);

}  // namespace cwt
