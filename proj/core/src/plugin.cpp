#include "cwt/plugin.hpp"

#include <stdexcept>

namespace cwt {
namespace {

class IdentityInstance final : public TransformInstance {
 public:
  Tensor forward(const Tensor& image) const override { return image; }
  Tensor vjp(const Tensor& upstream) const override { return upstream; }
  std::string describe() const override { return "identity=1\n"; }
};

class IdentityPlugin final : public TransformPlugin {
 public:
  std::string_view name() const noexcept override { return "identity"; }
  std::unique_ptr<TransformInstance> sample(std::size_t, std::size_t, std::size_t, Rng&) const override {
    return std::make_unique<IdentityInstance>();
  }
  std::size_t default_copies() const noexcept override { return 1; }
};

class CwtInstance final : public TransformInstance {
 public:
  CwtInstance(CwtCopyTrace trace, const CwtParams& params) : trace_(std::move(trace)), params_(params) {}
  Tensor forward(const Tensor& image) const override { return cwt_forward(image, trace_, params_); }
  Tensor vjp(const Tensor& upstream) const override { return cwt_vjp(upstream, trace_, params_); }
  std::string describe() const override { return trace_.describe(); }

 private:
  CwtCopyTrace trace_;
  CwtParams params_;
};

class CwtPlugin final : public TransformPlugin {
 public:
  explicit CwtPlugin(const CwtParams& params) : params_(params) { params_.validate(); }
  std::string_view name() const noexcept override { return "cwt"; }
  std::unique_ptr<TransformInstance> sample(std::size_t h, std::size_t w, std::size_t, Rng& rng) const override {
    return std::make_unique<CwtInstance>(sample_cwt_copy(params_, h, w, rng), params_);
  }
  std::size_t default_copies() const noexcept override { return params_.num_copies; }

 private:
  CwtParams params_;
};

class DimInstance final : public TransformInstance {
 public:
  DimInstance(DimTrace trace, Interpolation kernel) : trace_(trace), kernel_(kernel) {}
  Tensor forward(const Tensor& image) const override { return dim_forward(image, trace_, kernel_); }
  Tensor vjp(const Tensor& upstream) const override { return dim_vjp(upstream, trace_, kernel_); }
  std::string describe() const override { return trace_.describe(); }

 private:
  DimTrace trace_;
  Interpolation kernel_;
};

class DimPlugin final : public TransformPlugin {
 public:
  explicit DimPlugin(const DimParams& params) : params_(params) { params_.validate(); }
  std::string_view name() const noexcept override { return "dim"; }
  std::unique_ptr<TransformInstance> sample(std::size_t h, std::size_t w, std::size_t, Rng& rng) const override {
    return std::make_unique<DimInstance>(sample_dim(params_, h, w, rng), params_.kernel);
  }
  std::size_t default_copies() const noexcept override { return 1; }

 private:
  DimParams params_;
};

class SimInstance final : public TransformInstance {
 public:
  explicit SimInstance(std::size_t index) : index_(index) {}
  Tensor forward(const Tensor& image) const override { return mul(image, static_cast<float>(sim_factor(index_))); }
  Tensor vjp(const Tensor& upstream) const override { return sim_vjp(upstream, index_); }
  std::string describe() const override { return "scale_index=" + std::to_string(index_) + "\n"; }

 private:
  std::size_t index_;
};

class SimPlugin final : public TransformPlugin {
 public:
  explicit SimPlugin(std::size_t scales) : scales_(scales) {
    if (scales_ < 1) throw std::invalid_argument("sim: scales must be >= 1");
  }
  std::string_view name() const noexcept override { return "sim"; }
  std::unique_ptr<TransformInstance> sample(std::size_t, std::size_t, std::size_t copy, Rng&) const override {
    return std::make_unique<SimInstance>(copy % scales_);
  }
  std::size_t default_copies() const noexcept override { return scales_; }

 private:
  std::size_t scales_;
};

class BsrInstance final : public TransformInstance {
 public:
  BsrInstance(BsrTrace trace, Interpolation kernel) : trace_(std::move(trace)), kernel_(kernel) {}
  Tensor forward(const Tensor& image) const override { return bsr_forward(image, trace_, kernel_); }
  Tensor vjp(const Tensor& upstream) const override { return bsr_vjp(upstream, trace_, kernel_); }
  std::string describe() const override { return trace_.describe(); }

 private:
  BsrTrace trace_;
  Interpolation kernel_;
};

class BsrPlugin final : public TransformPlugin {
 public:
  explicit BsrPlugin(const BsrParams& params) : params_(params) { params_.validate(); }
  std::string_view name() const noexcept override { return "bsr"; }
  std::unique_ptr<TransformInstance> sample(std::size_t h, std::size_t w, std::size_t, Rng& rng) const override {
    return std::make_unique<BsrInstance>(sample_bsr(params_, h, w, rng), params_.kernel);
  }
  std::size_t default_copies() const noexcept override { return 20; }

 private:
  BsrParams params_;
};

}  // namespace

std::unique_ptr<TransformPlugin> make_plugin(std::string_view name, const PluginOptions& options) {
  if (name == "identity" || name == "mifgsm") return std::make_unique<IdentityPlugin>();
  if (name == "cwt") return std::make_unique<CwtPlugin>(options.cwt);
  if (name == "dim") return std::make_unique<DimPlugin>(options.dim);
  if (name == "sim") return std::make_unique<SimPlugin>(options.sim_scales);
  if (name == "bsr") return std::make_unique<BsrPlugin>(options.bsr);
  throw std::invalid_argument("unknown transform plugin '" + std::string(name) + "'");
}

std::vector<std::string> plugin_names() { return {"identity", "cwt", "dim", "sim", "bsr"}; }

}  // namespace cwt
