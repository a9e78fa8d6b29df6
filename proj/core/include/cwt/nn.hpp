#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cwt/dataset.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

// Layers ---------------------------------------------------------------------

struct Conv2d {
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;  // zeros
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};
struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};
/// 2x2 window, stride 2, floor on odd sizes.
struct MaxPool2d {
  friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};
struct GlobalAvgPool {
  friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct Dense {
  std::size_t out_features = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};

using Layer = std::variant<Conv2d, Relu, MaxPool2d, GlobalAvgPool, Flatten, Dense>;

std::string layer_name(const Layer& layer);
bool has_params(const Layer& layer);

/// Architecture of a small convnet: input [C,H,W] followed by an ordered layer list.
///
/// Text form, one layer per line (';' also separates, '#' starts a comment):
///
///     input 1 28 28
///     conv 8 3 1 1      # out_channels kernel [stride [padding]]
///     relu
///     maxpool
///     flatten
///     dense 10
struct ModelSpec {
  Shape input;
  std::vector<Layer> layers;

  /// Per-sample output shape of each layer. Throws naming the first layer whose
  /// input does not fit.
  std::vector<Shape> layer_shapes() const;
  /// Width of the final (logit) layer; requires a rank-1 output.
  std::size_t num_classes() const;

  std::string to_string() const;
  static ModelSpec parse(std::string_view text);
  /// FNV-1a of to_string().
  std::uint64_t hash() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Built-in MNIST-sized architectures: "tiny", "cnn2", "wide", "gap", "mlp".
ModelSpec builtin_spec(std::string_view name);
std::vector<std::string> builtin_spec_names();

// Model ----------------------------------------------------------------------

/// Weight and bias of one layer; both empty for parameter-free layers.
/// Conv weight is [out, in, k, k]; dense weight is [out, in].
template <typename T>
struct LayerParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  bool empty() const noexcept { return weight.empty(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
class BasicModel {
 public:
  /// Throws if any parameter tensor disagrees with the spec.
  BasicModel(ModelSpec spec, std::vector<LayerParams<T>> params);

  /// He-uniform weights from `seed`, zero biases.
  static BasicModel initialize(ModelSpec spec, std::uint64_t seed);
  static BasicModel zeros(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<Shape>& layer_shapes() const noexcept { return shapes_; }
  const std::vector<LayerParams<T>>& params() const noexcept { return params_; }
  /// Mutable access for training; shapes must be kept.
  std::vector<LayerParams<T>>& params() noexcept { return params_; }
  std::size_t num_classes() const { return spec_.num_classes(); }

  /// [B,C,H,W] -> logits [B,classes].
  BasicTensor<T> forward(const BasicTensor<T>& batch) const;

  template <typename U>
  BasicModel<U> cast() const {
    std::vector<LayerParams<U>> out;
    for (const auto& p : params_) {
      out.push_back(p.empty() ? LayerParams<U>{} : LayerParams<U>{p.weight.template cast<U>(), p.bias.template cast<U>()});
    }
    return BasicModel<U>(spec_, std::move(out));
  }

 private:
  ModelSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<LayerParams<T>> params_;
};

using Model = BasicModel<float>;
using ModelD = BasicModel<double>;

/// Every intermediate of one forward pass.
template <typename T>
struct ForwardCache {
  std::vector<BasicTensor<T>> outputs;             ///< [0] = input batch, [i+1] = output of layer i
  std::vector<std::vector<std::uint32_t>> argmax;  ///< per maxpool layer: source offset of each output
};

template <typename T>
ForwardCache<T> forward_cache(const BasicModel<T>& model, const BasicTensor<T>& batch);

struct BackwardOptions {
  bool params = true;
  bool outputs = false;  ///< also keep the gradient w.r.t. each layer output
};

template <typename T>
struct Gradients {
  BasicTensor<T> input;
  std::vector<LayerParams<T>> params;   ///< empty unless requested
  std::vector<BasicTensor<T>> outputs;  ///< [i] = d/d(output of layer i); empty unless requested
};

/// Backpropagates `grad_logits` through the cached forward pass.
template <typename T>
Gradients<T> backward(const BasicModel<T>& model, const ForwardCache<T>& cache, const BasicTensor<T>& grad_logits,
                      const BackwardOptions& options = {});

// Loss -----------------------------------------------------------------------

template <typename T>
struct CrossEntropy {
  T loss;
  BasicTensor<T> grad_logits;
};

/// Mean cross-entropy over the batch via max-shifted log-sum-exp.
template <typename T>
CrossEntropy<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

template <typename T>
struct LossAndInputGrad {
  T loss;
  BasicTensor<T> grad;  ///< [B,C,H,W]
};

template <typename T>
LossAndInputGrad<T> loss_and_input_grad(const BasicModel<T>& model, const BasicTensor<T>& batch,
                                        std::span<const int> labels);

template <typename T>
struct LossAndParamGrads {
  T loss;
  std::vector<LayerParams<T>> grads;
};

template <typename T>
LossAndParamGrads<T> loss_and_param_grads(const BasicModel<T>& model, const BasicTensor<T>& batch,
                                          std::span<const int> labels);

// Inference and training ------------------------------------------------------

/// Arg-max class per row of a [B,classes] tensor; ties go to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits);

/// Predicted class of every image in a [B,C,H,W] batch.
std::vector<int> predict(const Model& model, const Tensor& images);

/// Fraction of `data` classified correctly. Throws on an empty dataset.
double accuracy(const Model& model, const Dataset& data);

struct TrainOptions {
  std::size_t epochs = 5;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  Model model;
  std::map<std::string, std::string> metadata;  ///< dataset, epochs, seed, ...
};

/// Minibatch SGD with momentum. The model init and the per-epoch shuffle both
/// derive from options.seed, so equal inputs give bit-identical checkpoints.
Checkpoint train(const ModelSpec& spec, const Dataset& data, const TrainOptions& options,
                 const std::function<void(std::size_t epoch, double loss)>& on_epoch = {});

}  // namespace cwt
