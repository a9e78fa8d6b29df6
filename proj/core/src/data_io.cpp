#include "cwt/data_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

namespace cwt {
namespace {

using Kind = FormatError::Kind;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) | (std::uint32_t{bytes[at + 2]} << 8) |
         std::uint32_t{bytes[at + 3]};
}

// Little-endian primitives on streams.

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError(Kind::Truncated, std::string(what) + ": truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

void put_floats(std::ostream& out, std::span<const float> values) {
  for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void get_floats(std::istream& in, std::span<float> values, const char* what) {
  for (float& v : values) v = std::bit_cast<float>(get_u32(in, what));
}

void expect_magic(std::istream& in, std::string_view magic, const char* what) {
  std::array<char, 4> m{};
  if (!in.read(m.data(), 4)) throw FormatError(Kind::Truncated, std::string(what) + ": missing magic");
  if (std::string_view(m.data(), 4) != magic) {
    throw FormatError(Kind::BadMagic, std::string(what) + ": expected magic '" + std::string(magic) + "'");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(Kind::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::Io, "cannot open " + path.string());
  return in;
}

enum LayerTag : std::uint32_t { kConv = 0, kRelu = 1, kMaxPool = 2, kGap = 3, kFlatten = 4, kDense = 5 };

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 16) throw FormatError(Kind::Truncated, images_path.string() + ": truncated IDX header");
  if (lab.size() < 8) throw FormatError(Kind::Truncated, labels_path.string() + ": truncated IDX header");
  if (read_be32(img, 0) != 0x00000803) throw FormatError(Kind::BadMagic, images_path.string() + ": not an IDX image file");
  if (read_be32(lab, 0) != 0x00000801) throw FormatError(Kind::BadMagic, labels_path.string() + ": not an IDX label file");
  const std::size_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  const std::size_t n_labels = read_be32(lab, 4);
  if (n != n_labels) {
    throw FormatError(Kind::CountMismatch, "IDX count mismatch: " + std::to_string(n) + " images vs " +
                                               std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(Kind::Empty, images_path.string() + ": empty IDX file");
  if (img.size() < 16 + n * rows * cols) throw FormatError(Kind::Truncated, images_path.string() + ": truncated payload");
  if (lab.size() < 8 + n) throw FormatError(Kind::Truncated, labels_path.string() + ": truncated payload");

  Dataset data{Tensor({n, 1, rows, cols}), std::vector<int>(n), 10, images_path.filename().string()};
  for (std::size_t i = 0; i < n * rows * cols; ++i) data.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  std::size_t classes = 10;
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = lab[8 + i];
    classes = std::max<std::size_t>(classes, lab[8 + i] + 1u);
  }
  data.num_classes = classes;
  return data;
}

Dataset load_cifar10_bin(const std::filesystem::path& path) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  const auto bytes = read_file(path);
  if (bytes.empty()) throw FormatError(Kind::Empty, path.string() + ": empty CIFAR-10 file");
  if (bytes.size() % kRecord != 0) {
    throw FormatError(Kind::Truncated, path.string() + ": length " + std::to_string(bytes.size()) +
                                           " is not a multiple of " + std::to_string(kRecord));
  }
  const std::size_t n = bytes.size() / kRecord;
  Dataset data{Tensor({n, 3, 32, 32}), std::vector<int>(n), 10, path.filename().string()};
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    if (rec[0] > 9) throw FormatError(Kind::BadHeader, path.string() + ": label byte " + std::to_string(rec[0]));
    data.labels[i] = rec[0];
    for (std::size_t k = 0; k < kRecord - 1; ++k) data.images[i * (kRecord - 1) + k] = static_cast<float>(rec[1 + k]) / 255.0f;
  }
  return data;
}

Dataset load_dataset(const std::string& path) {
  if (path.size() > 4 && path.ends_with(".bin")) return load_cifar10_bin(path);
  Dataset d = load_mnist_idx(path + "-images-idx3-ubyte", path + "-labels-idx1-ubyte");
  d.split = std::filesystem::path(path).filename().string();
  return d;
}

Dataset filter_correct(const Dataset& data, std::span<const Model* const> models) {
  if (models.empty()) throw std::invalid_argument("filter_correct needs at least one model");
  if (data.empty()) throw std::invalid_argument("filter_correct on an empty dataset");
  std::vector<bool> keep(data.size(), true);
  for (const Model* m : models) {
    const auto pred = predict(*m, data.images);
    for (std::size_t i = 0; i < pred.size(); ++i) keep[i] = keep[i] && pred[i] == data.labels[i];
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) idx.push_back(i);
  if (idx.empty()) {
    throw std::runtime_error("no image is classified correctly by all " + std::to_string(models.size()) +
                             " models; supply a larger or easier evaluation set");
  }
  return data.subset(idx);
}

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write("TNSR", 4);
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  put_floats(out, tensor.values());
  if (!out) throw FormatError(Kind::Io, "tensor write failed");
}

Tensor read_tensor(std::istream& in) {
  expect_magic(in, "TNSR", "tensor");
  const std::uint32_t rank = get_u32(in, "tensor rank");
  if (rank < 1 || rank > 4) throw FormatError(Kind::BadHeader, "tensor: rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = get_u32(in, "tensor dims");
    if (d == 0) throw FormatError(Kind::BadHeader, "tensor: zero dimension");
  }
  std::size_t total = 1;
  for (std::size_t d : shape) {
    total *= d;
    if (total > (std::size_t{1} << 30)) throw FormatError(Kind::BadHeader, "tensor: implausible size");
  }
  Tensor t(shape);
  get_floats(in, t.values(), "tensor payload");
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  auto out = open_out(path);
  write_tensor(out, tensor);
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor(in);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const ModelSpec& spec = ckpt.model.spec();
  out.write("CWTM", 4);
  put_u32(out, static_cast<std::uint32_t>(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Layer& layer = spec.layers[i];
    const auto& p = ckpt.model.params()[i];
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      put_u32(out, kConv);
      for (std::size_t v : {c->out_channels, p.weight.dim(1), c->kernel, c->stride, c->padding}) {
        put_u32(out, static_cast<std::uint32_t>(v));
      }
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      put_u32(out, kDense);
      put_u32(out, static_cast<std::uint32_t>(d->out_features));
      put_u32(out, static_cast<std::uint32_t>(p.weight.dim(1)));
    } else if (std::holds_alternative<Relu>(layer)) {
      put_u32(out, kRelu);
    } else if (std::holds_alternative<MaxPool2d>(layer)) {
      put_u32(out, kMaxPool);
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      put_u32(out, kGap);
    } else {
      put_u32(out, kFlatten);
    }
    if (!p.empty()) {
      put_floats(out, p.weight.values());
      put_floats(out, p.bias.values());
    }
  }
  std::ostringstream meta;
  meta << "input=" << spec.input[0] << "x" << spec.input[1] << "x" << spec.input[2] << "\n";
  meta << "spec_hash=" << std::hex << std::setw(16) << std::setfill('0') << spec.hash() << std::dec << "\n";
  for (const auto& [k, v] : ckpt.metadata) {
    if (k == "input" || k == "spec_hash") continue;
    meta << k << "=" << v << "\n";
  }
  const std::string text = meta.str();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError(Kind::Io, "checkpoint write failed");
}

namespace {

constexpr std::uint32_t kMaxLayers = 1024;

// Guards allocations against corrupt headers; 2^28 floats is far beyond any real layer.
void require_plausible(std::size_t a, std::size_t b) {
  constexpr std::size_t kMaxElements = std::size_t{1} << 28;
  if (a > kMaxElements || b > kMaxElements || a * b > kMaxElements) {
    throw FormatError(FormatError::Kind::BadHeader, "checkpoint: implausible layer size");
  }
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in) {
  expect_magic(in, "CWTM", "checkpoint");
  const std::uint32_t count = get_u32(in, "checkpoint layer count");
  if (count == 0 || count > kMaxLayers) {
    throw FormatError(Kind::BadHeader, "checkpoint: implausible layer count " + std::to_string(count));
  }
  ModelSpec spec;
  std::vector<LayerParams<float>> params(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t tag = get_u32(in, "checkpoint layer tag");
    switch (tag) {
      case kConv: {
        std::array<std::size_t, 5> d{};
        for (auto& v : d) v = get_u32(in, "checkpoint conv dims");
        if (d[0] == 0 || d[1] == 0 || d[2] == 0) throw FormatError(Kind::BadHeader, "checkpoint: zero conv dimension");
        require_plausible(d[0] * d[1], d[2] * d[2]);
        spec.layers.push_back(Conv2d{d[0], d[2], d[3], d[4]});
        params[i] = {Tensor({d[0], d[1], d[2], d[2]}), Tensor({d[0]})};
        break;
      }
      case kDense: {
        const std::size_t o = get_u32(in, "checkpoint dense dims"), f = get_u32(in, "checkpoint dense dims");
        if (o == 0 || f == 0) throw FormatError(Kind::BadHeader, "checkpoint: zero dense dimension");
        require_plausible(o, f);
        spec.layers.push_back(Dense{o});
        params[i] = {Tensor({o, f}), Tensor({o})};
        break;
      }
      case kRelu: spec.layers.push_back(Relu{}); break;
      case kMaxPool: spec.layers.push_back(MaxPool2d{}); break;
      case kGap: spec.layers.push_back(GlobalAvgPool{}); break;
      case kFlatten: spec.layers.push_back(Flatten{}); break;
      default: throw FormatError(Kind::BadHeader, "checkpoint: unknown layer tag " + std::to_string(tag));
    }
    if (!params[i].empty()) {
      get_floats(in, params[i].weight.values(), "checkpoint weights");
      get_floats(in, params[i].bias.values(), "checkpoint biases");
    }
  }
  const std::uint32_t meta_len = get_u32(in, "checkpoint metadata length");
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), meta_len)) throw FormatError(Kind::Truncated, "checkpoint: truncated metadata");

  std::map<std::string, std::string> metadata;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto input = metadata.find("input");
  if (input == metadata.end()) throw FormatError(Kind::BadHeader, "checkpoint: missing input shape");
  {
    std::string s = input->second;
    for (char& ch : s)
      if (ch == 'x') ch = ' ';
    std::istringstream dims(s);
    spec.input.assign(3, 0);
    if (!(dims >> spec.input[0] >> spec.input[1] >> spec.input[2])) {
      throw FormatError(Kind::BadHeader, "checkpoint: bad input shape '" + input->second + "'");
    }
  }
  std::ostringstream expect;
  expect << std::hex << std::setw(16) << std::setfill('0') << spec.hash();
  if (auto h = metadata.find("spec_hash"); h != metadata.end() && h->second != expect.str()) {
    throw FormatError(Kind::BadHeader, "checkpoint: spec hash " + h->second + " does not match layers (" + expect.str() + ")");
  }
  try {
    return Checkpoint{Model(spec, std::move(params)), std::move(metadata)};
  } catch (const std::invalid_argument& e) {
    throw FormatError(Kind::BadHeader, std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  auto out = open_out(path);
  write_checkpoint(out, checkpoint);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_checkpoint(in);
}

void write_netpbm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw std::invalid_argument("netpbm needs a [1,H,W] or [3,H,W] image, got " + to_string(image.shape()));
  }
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  auto out = open_out(path);
  out << (C == 1 ? "P5" : "P6") << "\n" << W << " " << H << "\n255\n";
  std::vector<char> payload(C * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        payload[(y * W + x) * C + c] = static_cast<char>(static_cast<std::uint8_t>(std::lround(255.0f * v)));
      }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw FormatError(Kind::Io, "netpbm write failed: " + path.string());
}

Tensor read_netpbm(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw FormatError(Kind::BadMagic, path.string() + ": not a binary P5/P6 file");
  auto next_int = [&]() -> long {
    for (;;) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      long v = -1;
      if (!(in >> v)) throw FormatError(Kind::BadHeader, path.string() + ": bad netpbm header");
      return v;
    }
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || w > 65535 || h > 65535 || maxval != 255) {
    throw FormatError(Kind::BadHeader, path.string() + ": unsupported netpbm header");
  }
  in.get();  // single whitespace before the payload
  const std::size_t C = magic == "P5" ? 1 : 3;
  const auto H = static_cast<std::size_t>(h), W = static_cast<std::size_t>(w);
  std::vector<unsigned char> payload(C * H * W);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()))) {
    throw FormatError(Kind::Truncated, path.string() + ": truncated netpbm payload");
  }
  Tensor image({C, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c) image.at(c, y, x) = static_cast<float>(payload[(y * W + x) * C + c]) / 255.0f;
  return image;
}

}  // namespace cwt
