#include "cwt/nn.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cwt/rng.hpp"

namespace cwt {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

std::string layer_name(const Layer& layer) {
  return std::visit(overloaded{[](const Conv2d&) { return "conv"; }, [](const Relu&) { return "relu"; },
                               [](const MaxPool2d&) { return "maxpool"; }, [](const GlobalAvgPool&) { return "gap"; },
                               [](const Flatten&) { return "flatten"; }, [](const Dense&) { return "dense"; }},
                    layer);
}

bool has_params(const Layer& layer) {
  return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer);
}

namespace {

std::string layer_label(std::size_t i, const Layer& layer) {
  return "layer " + std::to_string(i) + " (" + layer_name(layer) + ")";
}

// Output positions o in [lo, hi) whose tap o*stride + k - pad lands inside [0, n).
std::pair<std::size_t, std::size_t> valid_range(std::size_t n, std::size_t out, std::size_t k, std::size_t stride,
                                                std::size_t pad) {
  const std::size_t lo = pad > k ? (pad - k + stride - 1) / stride : 0;
  if (n - 1 + pad < k) return {0, 0};
  const std::size_t hi = std::min(out, (n - 1 + pad - k) / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

std::vector<Shape> ModelSpec::layer_shapes() const {
  if (input.size() != 3) throw std::invalid_argument("model input must be [C,H,W], got " + cwt::to_string(input));
  shape_size(input);
  std::vector<Shape> shapes;
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& layer = layers[i];
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument(layer_label(i, layer) + ": " + why + " (input " + cwt::to_string(cur) + ")");
    };
    std::visit(overloaded{
                   [&](const Conv2d& c) {
                     if (cur.size() != 3) fail("needs a [C,H,W] input");
                     if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) fail("zero conv dimension");
                     if (cur[1] + 2 * c.padding < c.kernel || cur[2] + 2 * c.padding < c.kernel) fail("kernel larger than input");
                     cur = {c.out_channels, (cur[1] + 2 * c.padding - c.kernel) / c.stride + 1,
                            (cur[2] + 2 * c.padding - c.kernel) / c.stride + 1};
                   },
                   [&](const Relu&) {},
                   [&](const MaxPool2d&) {
                     if (cur.size() != 3) fail("needs a [C,H,W] input");
                     if (cur[1] < 2 || cur[2] < 2) fail("input smaller than the 2x2 window");
                     cur = {cur[0], cur[1] / 2, cur[2] / 2};
                   },
                   [&](const GlobalAvgPool&) {
                     if (cur.size() != 3) fail("needs a [C,H,W] input");
                     cur = {cur[0]};
                   },
                   [&](const Flatten&) { cur = {shape_size(cur)}; },
                   [&](const Dense& d) {
                     if (cur.size() != 1) fail("needs a flat input");
                     if (d.out_features == 0) fail("zero output features");
                     cur = {d.out_features};
                   },
               },
               layer);
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t ModelSpec::num_classes() const {
  const auto shapes = layer_shapes();
  if (shapes.empty() || shapes.back().size() != 1) throw std::invalid_argument("model does not end in a logit vector");
  return shapes.back()[0];
}

std::string ModelSpec::to_string() const {
  std::ostringstream out;
  out << "input";
  for (std::size_t d : input) out << " " << d;
  out << "\n";
  for (const Layer& layer : layers) {
    out << layer_name(layer);
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      out << " " << c->out_channels << " " << c->kernel << " " << c->stride << " " << c->padding;
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      out << " " << d->out_features;
    }
    out << "\n";
  }
  return out.str();
}

ModelSpec ModelSpec::parse(std::string_view text) {
  ModelSpec spec;
  std::string normalized(text);
  for (char& ch : normalized)
    if (ch == ';') ch = '\n';
  std::istringstream lines(normalized);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tok(line);
    std::string kind;
    if (!(tok >> kind)) continue;
    std::vector<std::size_t> args;
    std::string word;
    while (tok >> word) {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(word, &used);
        if (used != word.size() || v < 0) throw std::invalid_argument(word);
        args.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw std::invalid_argument("model spec line " + std::to_string(line_no) + ": bad number '" + word + "'");
      }
    }
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) {
        throw std::invalid_argument("model spec line " + std::to_string(line_no) + ": '" + kind + "' takes " +
                                    std::to_string(lo) + ".." + std::to_string(hi) + " arguments");
      }
    };
    if (kind == "input") {
      arity(3, 3);
      spec.input = {args[0], args[1], args[2]};
    } else if (kind == "conv") {
      arity(2, 4);
      spec.layers.push_back(Conv2d{args[0], args[1], args.size() > 2 ? args[2] : 1, args.size() > 3 ? args[3] : 0});
    } else if (kind == "relu") {
      arity(0, 0);
      spec.layers.push_back(Relu{});
    } else if (kind == "maxpool") {
      arity(0, 0);
      spec.layers.push_back(MaxPool2d{});
    } else if (kind == "gap") {
      arity(0, 0);
      spec.layers.push_back(GlobalAvgPool{});
    } else if (kind == "flatten") {
      arity(0, 0);
      spec.layers.push_back(Flatten{});
    } else if (kind == "dense") {
      arity(1, 1);
      spec.layers.push_back(Dense{args[0]});
    } else {
      throw std::invalid_argument("model spec line " + std::to_string(line_no) + ": unknown layer '" + kind + "'");
    }
  }
  if (spec.input.empty()) throw std::invalid_argument("model spec has no 'input' line");
  spec.num_classes();
  return spec;
}

std::uint64_t ModelSpec::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : to_string()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

ModelSpec builtin_spec(std::string_view name) {
  if (name == "tiny") return ModelSpec::parse("input 1 28 28; conv 4 3 2 1; relu; maxpool; flatten; dense 10");
  if (name == "cnn2") {
    return ModelSpec::parse("input 1 28 28; conv 8 3 1 1; relu; maxpool; conv 16 3 1 1; relu; maxpool; flatten; dense 10");
  }
  if (name == "wide") return ModelSpec::parse("input 1 28 28; conv 16 5 1 2; relu; maxpool; maxpool; flatten; dense 10");
  if (name == "gap") {
    return ModelSpec::parse("input 1 28 28; conv 8 3 1 0; relu; conv 16 3 2 0; relu; conv 32 3 2 0; relu; gap; dense 10");
  }
  if (name == "mlp") return ModelSpec::parse("input 1 28 28; conv 4 5 2 2; relu; flatten; dense 64; relu; dense 10");
  throw std::invalid_argument("unknown built-in model '" + std::string(name) + "'");
}

std::vector<std::string> builtin_spec_names() { return {"tiny", "cnn2", "wide", "gap", "mlp"}; }

// ---------------------------------------------------------------------------

namespace {

Shape batched(std::size_t batch, const Shape& per_sample) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

Shape param_shape_weight(const Layer& layer, const Shape& in) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) return {c->out_channels, in[0], c->kernel, c->kernel};
  const auto& d = std::get<Dense>(layer);
  return {d.out_features, in[0]};
}

Shape param_shape_bias(const Layer& layer) {
  if (const auto* c = std::get_if<Conv2d>(&layer)) return {c->out_channels};
  return {std::get<Dense>(layer).out_features};
}

template <typename T>
BasicTensor<T> conv_forward(const Conv2d& conv, const LayerParams<T>& p, const BasicTensor<T>& in, const Shape& out_shape) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = out_shape[0], OH = out_shape[1], OW = out_shape[2];
  const std::size_t K = conv.kernel, S = conv.stride, P = conv.padding;
  BasicTensor<T> out({B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      T* dst = out.data() + ((b * O + o) * OH) * OW;
      std::fill(dst, dst + OH * OW, p.bias[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const T* src = in.data() + ((b * C + c) * H) * W;
        const T* wk = p.weight.data() + ((o * C + c) * K) * K;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const auto [y0, y1] = valid_range(H, OH, ky, S, P);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const auto [x0, x1] = valid_range(W, OW, kx, S, P);
            const T wv = wk[ky * K + kx];
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const T* row = src + (oy * S + ky - P) * W;
              T* orow = dst + oy * OW;
              for (std::size_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox * S + kx - P];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv_backward(const Conv2d& conv, const LayerParams<T>& p, const BasicTensor<T>& in, const BasicTensor<T>& gout,
                   BasicTensor<T>* gin, LayerParams<T>* gparams) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = gout.dim(1), OH = gout.dim(2), OW = gout.dim(3);
  const std::size_t K = conv.kernel, S = conv.stride, P = conv.padding;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      const T* g = gout.data() + ((b * O + o) * OH) * OW;
      if (gparams) {
        T sum{0};
        for (std::size_t i = 0; i < OH * OW; ++i) sum += g[i];
        gparams->bias[o] += sum;
      }
      for (std::size_t c = 0; c < C; ++c) {
        const T* src = in.data() + ((b * C + c) * H) * W;
        T* gsrc = gin ? gin->data() + ((b * C + c) * H) * W : nullptr;
        const T* wk = p.weight.data() + ((o * C + c) * K) * K;
        T* gwk = gparams ? gparams->weight.data() + ((o * C + c) * K) * K : nullptr;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const auto [y0, y1] = valid_range(H, OH, ky, S, P);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const auto [x0, x1] = valid_range(W, OW, kx, S, P);
            const T wv = wk[ky * K + kx];
            T wsum{0};
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const std::size_t off = (oy * S + ky - P) * W;
              const T* grow = g + oy * OW;
              if (gwk) {
                const T* row = src + off;
                for (std::size_t ox = x0; ox < x1; ++ox) wsum += grow[ox] * row[ox * S + kx - P];
              }
              if (gsrc) {
                T* row = gsrc + off;
                for (std::size_t ox = x0; ox < x1; ++ox) row[ox * S + kx - P] += wv * grow[ox];
              }
            }
            if (gwk) gwk[ky * K + kx] += wsum;
          }
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> dense_forward(const LayerParams<T>& p, const BasicTensor<T>& in) {
  const std::size_t B = in.dim(0), F = in.dim(1), O = p.weight.dim(0);
  BasicTensor<T> out({B, O});
  for (std::size_t b = 0; b < B; ++b) {
    const T* x = in.data() + b * F;
    for (std::size_t o = 0; o < O; ++o) {
      const T* w = p.weight.data() + o * F;
      T acc = p.bias[o];
      for (std::size_t f = 0; f < F; ++f) acc += w[f] * x[f];
      out[b * O + o] = acc;
    }
  }
  return out;
}

template <typename T>
void dense_backward(const LayerParams<T>& p, const BasicTensor<T>& in, const BasicTensor<T>& gout, BasicTensor<T>* gin,
                    LayerParams<T>* gparams) {
  const std::size_t B = in.dim(0), F = in.dim(1), O = p.weight.dim(0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* x = in.data() + b * F;
    for (std::size_t o = 0; o < O; ++o) {
      const T g = gout[b * O + o];
      if (gparams) {
        gparams->bias[o] += g;
        T* gw = gparams->weight.data() + o * F;
        for (std::size_t f = 0; f < F; ++f) gw[f] += g * x[f];
      }
      if (gin) {
        const T* w = p.weight.data() + o * F;
        T* gx = gin->data() + b * F;
        for (std::size_t f = 0; f < F; ++f) gx[f] += w[f] * g;
      }
    }
  }
}

template <typename T>
BasicTensor<T> maxpool_forward(const BasicTensor<T>& in, std::vector<std::uint32_t>& argmax) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t OH = H / 2, OW = W / 2;
  BasicTensor<T> out({B, C, OH, OW});
  argmax.assign(out.size(), 0);
  std::size_t k = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++k) {
        std::size_t best = base + (2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * W + 2 * ox + dx;
            if (in[idx] > in[best]) best = idx;  // strict: first maximum wins
          }
        }
        out[k] = in[best];
        argmax[k] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

}  // namespace

template <typename T>
BasicModel<T>::BasicModel(ModelSpec spec, std::vector<LayerParams<T>> params)
    : spec_(std::move(spec)), shapes_(spec_.layer_shapes()), params_(std::move(params)) {
  spec_.num_classes();
  if (params_.size() != spec_.layers.size()) {
    throw std::invalid_argument("model has " + std::to_string(spec_.layers.size()) + " layers but " +
                                std::to_string(params_.size()) + " parameter records");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Layer& layer = spec_.layers[i];
    const Shape& in = i == 0 ? spec_.input : shapes_[i - 1];
    if (!has_params(layer)) {
      if (!params_[i].empty()) throw std::invalid_argument(layer_label(i, layer) + " takes no parameters");
      continue;
    }
    const Shape ws = param_shape_weight(layer, in), bs = param_shape_bias(layer);
    if (params_[i].weight.shape() != ws || params_[i].bias.shape() != bs) {
      throw std::invalid_argument(layer_label(i, layer) + ": expected weight " + to_string(ws) + " and bias " +
                                  to_string(bs) + ", got " + to_string(params_[i].weight.shape()) + " and " +
                                  to_string(params_[i].bias.shape()));
    }
  }
}

template <typename T>
BasicModel<T> BasicModel<T>::zeros(ModelSpec spec) {
  const auto shapes = spec.layer_shapes();
  std::vector<LayerParams<T>> params(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!has_params(spec.layers[i])) continue;
    const Shape& in = i == 0 ? spec.input : shapes[i - 1];
    params[i].weight = BasicTensor<T>(param_shape_weight(spec.layers[i], in));
    params[i].bias = BasicTensor<T>(param_shape_bias(spec.layers[i]));
  }
  return BasicModel(std::move(spec), std::move(params));
}

template <typename T>
BasicModel<T> BasicModel<T>::initialize(ModelSpec spec, std::uint64_t seed) {
  BasicModel model = zeros(std::move(spec));
  Rng rng(seed);
  for (auto& p : model.params_) {
    if (p.empty()) continue;
    const std::size_t fan_in = p.weight.size() / p.weight.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& w : p.weight.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  }
  return model;
}

template <typename T>
ForwardCache<T> forward_cache(const BasicModel<T>& model, const BasicTensor<T>& batch) {
  const ModelSpec& spec = model.spec();
  if (batch.rank() != 4 || !std::equal(spec.input.begin(), spec.input.end(), batch.shape().begin() + 1)) {
    throw std::invalid_argument("model input " + to_string(spec.input) + " does not accept batch " +
                                to_string(batch.shape()));
  }
  const std::size_t B = batch.dim(0);
  ForwardCache<T> cache;
  cache.outputs.reserve(spec.layers.size() + 1);
  cache.outputs.push_back(batch);
  cache.argmax.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const BasicTensor<T>& in = cache.outputs.back();
    const Shape out_shape = batched(B, model.layer_shapes()[i]);
    const LayerParams<T>& p = model.params()[i];
    BasicTensor<T> out = std::visit(
        overloaded{
            [&](const Conv2d& c) { return conv_forward(c, p, in, model.layer_shapes()[i]); },
            [&](const Relu&) { return detail::map(in, [](T v) { return v > T{0} ? v : T{0}; }); },
            [&](const MaxPool2d&) { return maxpool_forward(in, cache.argmax[i]); },
            [&](const GlobalAvgPool&) {
              const std::size_t C = in.dim(1), HW = in.dim(2) * in.dim(3);
              BasicTensor<T> o({B, C});
              for (std::size_t k = 0; k < B * C; ++k) {
                T sum{0};
                for (std::size_t j = 0; j < HW; ++j) sum += in[k * HW + j];
                o[k] = sum / static_cast<T>(HW);
              }
              return o;
            },
            [&](const Flatten&) { return in.reshaped(out_shape); },
            [&](const Dense&) { return dense_forward(p, in); },
        },
        spec.layers[i]);
    cache.outputs.push_back(std::move(out));
  }
  return cache;
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& batch) const {
  return std::move(forward_cache(*this, batch).outputs.back());
}

template <typename T>
Gradients<T> backward(const BasicModel<T>& model, const ForwardCache<T>& cache, const BasicTensor<T>& grad_logits,
                      const BackwardOptions& options) {
  const ModelSpec& spec = model.spec();
  const std::size_t L = spec.layers.size();
  if (grad_logits.shape() != cache.outputs.back().shape()) {
    throw std::invalid_argument("logit gradient " + to_string(grad_logits.shape()) + " does not match logits " +
                                to_string(cache.outputs.back().shape()));
  }
  Gradients<T> result;
  if (options.params) {
    result.params.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
      const auto& p = model.params()[i];
      if (!p.empty()) result.params[i] = {BasicTensor<T>(p.weight.shape()), BasicTensor<T>(p.bias.shape())};
    }
  }
  if (options.outputs) result.outputs.resize(L);

  BasicTensor<T> grad = grad_logits;
  for (std::size_t i = L; i-- > 0;) {
    if (options.outputs) result.outputs[i] = grad;
    const BasicTensor<T>& in = cache.outputs[i];
    const LayerParams<T>& p = model.params()[i];
    LayerParams<T>* gp = options.params && !p.empty() ? &result.params[i] : nullptr;
    BasicTensor<T> gin(in.shape());
    std::visit(overloaded{
                   [&](const Conv2d& c) { conv_backward(c, p, in, grad, &gin, gp); },
                   [&](const Relu&) {
                     for (std::size_t k = 0; k < in.size(); ++k) gin[k] = in[k] > T{0} ? grad[k] : T{0};
                   },
                   [&](const MaxPool2d&) {
                     const auto& am = cache.argmax[i];
                     for (std::size_t k = 0; k < am.size(); ++k) gin[am[k]] += grad[k];
                   },
                   [&](const GlobalAvgPool&) {
                     const std::size_t BC = in.dim(0) * in.dim(1), HW = in.dim(2) * in.dim(3);
                     const T inv = T{1} / static_cast<T>(HW);
                     for (std::size_t k = 0; k < BC; ++k)
                       for (std::size_t j = 0; j < HW; ++j) gin[k * HW + j] = grad[k] * inv;
                   },
                   [&](const Flatten&) { gin = grad.reshaped(in.shape()); },
                   [&](const Dense&) { dense_backward(p, in, grad, &gin, gp); },
               },
               spec.layers[i]);
    grad = std::move(gin);
  }
  result.input = std::move(grad);
  return result;
}

template <typename T>
CrossEntropy<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy expects [B,classes] logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                std::to_string(B));
  }
  CrossEntropy<T> ce{T{0}, BasicTensor<T>({B, K})};
  const T inv_b = T{1} / static_cast<T>(B);
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
    }
    const T* z = logits.data() + b * K;
    const T m = *std::max_element(z, z + K);
    T sum{0};
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(z[k] - m);
    ce.loss += std::log(sum) - (z[y] - m);
    T* g = ce.grad_logits.data() + b * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T softmax = std::exp(z[k] - m) / sum;
      g[k] = (softmax - (static_cast<std::size_t>(y) == k ? T{1} : T{0})) * inv_b;
    }
  }
  ce.loss *= inv_b;
  return ce;
}

template <typename T>
LossAndInputGrad<T> loss_and_input_grad(const BasicModel<T>& model, const BasicTensor<T>& batch,
                                        std::span<const int> labels) {
  const ForwardCache<T> cache = forward_cache(model, batch);
  CrossEntropy<T> ce = cross_entropy(cache.outputs.back(), labels);
  Gradients<T> g = backward(model, cache, ce.grad_logits, {.params = false, .outputs = false});
  return {ce.loss, std::move(g.input)};
}

template <typename T>
LossAndParamGrads<T> loss_and_param_grads(const BasicModel<T>& model, const BasicTensor<T>& batch,
                                          std::span<const int> labels) {
  const ForwardCache<T> cache = forward_cache(model, batch);
  CrossEntropy<T> ce = cross_entropy(cache.outputs.back(), labels);
  Gradients<T> g = backward(model, cache, ce.grad_logits, {.params = true, .outputs = false});
  return {ce.loss, std::move(g.params)};
}

template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("argmax_rows expects [B,classes]");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = logits.data() + b * K;
    out[b] = static_cast<int>(std::max_element(z, z + K) - z);  // first maximum
  }
  return out;
}

std::vector<int> predict(const Model& model, const Tensor& images) {
  if (images.rank() != 4) throw std::invalid_argument("predict expects a [B,C,H,W] batch");
  constexpr std::size_t kChunk = 256;
  const std::size_t B = images.dim(0);
  const std::size_t per = images.size() / B;
  std::vector<int> out;
  out.reserve(B);
  for (std::size_t start = 0; start < B; start += kChunk) {
    const std::size_t n = std::min(kChunk, B - start);
    Shape shape = images.shape();
    shape[0] = n;
    std::vector<float> chunk(images.values().begin() + static_cast<std::ptrdiff_t>(start * per),
                             images.values().begin() + static_cast<std::ptrdiff_t>((start + n) * per));
    const auto pred = argmax_rows(model.forward(Tensor(shape, std::move(chunk))));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("accuracy of an empty dataset");
  const auto pred = predict(model, data.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

Checkpoint train(const ModelSpec& spec, const Dataset& data, const TrainOptions& options,
                 const std::function<void(std::size_t, double)>& on_epoch) {
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  data.validate();
  Model model = Model::initialize(spec, Rng::split(options.seed, 0).next_u64());
  if (data.num_classes > model.num_classes()) {
    throw std::invalid_argument("dataset has " + std::to_string(data.num_classes) + " classes, model only " +
                                std::to_string(model.num_classes()));
  }

  std::vector<LayerParams<float>> velocity;
  for (const auto& p : model.params()) {
    velocity.push_back(p.empty() ? LayerParams<float>{}
                                 : LayerParams<float>{Tensor(p.weight.shape()), Tensor(p.bias.shape())});
  }
  const auto lr = static_cast<float>(options.learning_rate);
  const auto mom = static_cast<float>(options.momentum);
  const std::size_t n = data.size();
  const std::size_t per = data.images.size() / n;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::split(options.seed, epoch + 1);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t m = std::min(options.batch_size, n - start);
      Shape shape = data.images.shape();
      shape[0] = m;
      Tensor batch(shape);
      std::vector<int> labels(m);
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t src = order[start + j];
        std::copy_n(data.images.data() + src * per, per, batch.data() + j * per);
        labels[j] = data.labels[src];
      }
      auto [loss, grads] = loss_and_param_grads(model, batch, labels);
      epoch_loss += static_cast<double>(loss) * static_cast<double>(m);
      for (std::size_t l = 0; l < grads.size(); ++l) {
        if (grads[l].empty()) continue;
        auto step = [&](Tensor& w, Tensor& v, const Tensor& g) {
          for (std::size_t k = 0; k < w.size(); ++k) {
            v[k] = mom * v[k] + g[k];
            w[k] -= lr * v[k];
          }
        };
        step(model.params()[l].weight, velocity[l].weight, grads[l].weight);
        step(model.params()[l].bias, velocity[l].bias, grads[l].bias);
      }
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(n));
  }

  Checkpoint ckpt{std::move(model), {}};
  ckpt.metadata["dataset"] = data.split;
  ckpt.metadata["epochs"] = std::to_string(options.epochs);
  ckpt.metadata["seed"] = std::to_string(options.seed);
  ckpt.metadata["learning_rate"] = std::to_string(options.learning_rate);
  ckpt.metadata["momentum"] = std::to_string(options.momentum);
  ckpt.metadata["batch_size"] = std::to_string(options.batch_size);
  return ckpt;
}

#define CWT_INSTANTIATE(T)                                                                                         \
  template class BasicModel<T>;                                                                                    \
  template ForwardCache<T> forward_cache(const BasicModel<T>&, const BasicTensor<T>&);                             \
  template Gradients<T> backward(const BasicModel<T>&, const ForwardCache<T>&, const BasicTensor<T>&,              \
                                 const BackwardOptions&);                                                          \
  template CrossEntropy<T> cross_entropy(const BasicTensor<T>&, std::span<const int>);                             \
  template LossAndInputGrad<T> loss_and_input_grad(const BasicModel<T>&, const BasicTensor<T>&, std::span<const int>); \
  template LossAndParamGrads<T> loss_and_param_grads(const BasicModel<T>&, const BasicTensor<T>&,                  \
                                                     std::span<const int>);                                        \
  template std::vector<int> argmax_rows(const BasicTensor<T>&);

CWT_INSTANTIATE(float)
CWT_INSTANTIATE(double)
#undef CWT_INSTANTIATE

}  // namespace cwt
