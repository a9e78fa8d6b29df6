#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cwt/dataset.hpp"
#include "cwt/nn.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

/// Malformed or unreadable file. `kind` tells the failure modes apart.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, BadHeader, Truncated, CountMismatch, Empty };
  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Datasets -------------------------------------------------------------------

/// MNIST IDX pair (magic 0x803 images, 0x801 labels; big-endian dims). Pixels / 255.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batch: records of 1 label byte + 3072 channel-major pixels.
Dataset load_cifar10_bin(const std::filesystem::path& path);

/// `path` ending in .bin loads CIFAR-10; otherwise `path` is an IDX prefix and
/// `<path>-images-idx3-ubyte` / `<path>-labels-idx1-ubyte` are read.
Dataset load_dataset(const std::string& path);

/// Images every model classifies correctly, original order kept. Throws when
/// nothing survives.
Dataset filter_correct(const Dataset& data, std::span<const Model* const> models);

// Tensors: "TNSR", u32 rank, rank x u32 dims, float32 payload; little-endian. ---

void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

// Checkpoints: "CWTM", u32 layer count, per layer u32 tag + u32 dims + float32
// weight and bias, then u32 length + UTF-8 key=value metadata lines. ----------

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// NetPBM: binary P5 (1 channel) / P6 (3 channels), maxval 255. ----------------

/// [C,H,W] image in [0,1], C in {1,3}; each value is written as round(255 v).
void write_netpbm(const std::filesystem::path& path, const Tensor& image);
/// [C,H,W] image with values byte / 255.
Tensor read_netpbm(const std::filesystem::path& path);

}  // namespace cwt
