#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cwt/baselines.hpp"
#include "cwt/cwt_transform.hpp"
#include "cwt/rng.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

/// One sampled transformation: a fixed linear map on [C,H,W] images and its adjoint.
class TransformInstance {
 public:
  virtual ~TransformInstance() = default;
  virtual Tensor forward(const Tensor& image) const = 0;
  virtual Tensor vjp(const Tensor& upstream) const = 0;
  virtual std::string describe() const = 0;
};

/// An input transformation pluggable into the attack engine.
class TransformPlugin {
 public:
  virtual ~TransformPlugin() = default;

  virtual std::string_view name() const noexcept = 0;

  /// Draws the randomness of copy `copy_index` for an H x W image. Deterministic
  /// plugins may ignore `rng`; SIM uses `copy_index` to pick its scale.
  virtual std::unique_ptr<TransformInstance> sample(std::size_t height, std::size_t width, std::size_t copy_index,
                                                    Rng& rng) const = 0;

  /// Copies per gradient in the method's reference configuration.
  virtual std::size_t default_copies() const noexcept = 0;
};

struct PluginOptions {
  CwtParams cwt;
  DimParams dim;
  std::size_t sim_scales = 5;
  BsrParams bsr;
};

/// identity (alias mifgsm), cwt, dim, sim, bsr.
std::unique_ptr<TransformPlugin> make_plugin(std::string_view name, const PluginOptions& options = {});

std::vector<std::string> plugin_names();

}  // namespace cwt
