#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cwt {

/// Dimension sizes of a tensor, outermost first. Rank 1 to 4.
using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Number of elements described by `shape`. Throws on rank outside [1, 4]
/// or on a zero-sized dimension.
std::size_t shape_size(const Shape& shape);

/// Dense row-major tensor with an explicit shape.
///
/// A default-constructed tensor is empty (rank 0, no data) and only serves as a
/// placeholder; every other constructor enforces rank 1..4, dims >= 1 and
/// product(shape) == size().
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_size(shape_) != data_.size()) {
      throw std::invalid_argument("tensor shape " + to_string(shape_) + " does not match " +
                                  std::to_string(data_.size()) + " values");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element (c, y, x) of a rank-3 tensor.
  T& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Same data under a new shape of equal element count.
  BasicTensor reshaped(Shape shape) const& { return BasicTensor(std::move(shape), data_); }
  BasicTensor reshaped(Shape shape) && { return BasicTensor(std::move(shape), std::move(data_)); }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  /// Slice `index` along axis 0, with the leading axis dropped (rank >= 2).
  BasicTensor slice(std::size_t index) const {
    if (rank() < 2 || index >= shape_[0]) throw std::out_of_range("tensor slice out of range");
    Shape inner(shape_.begin() + 1, shape_.end());
    const std::size_t n = shape_size(inner);
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * n);
    return BasicTensor(std::move(inner), std::vector<T>(first, first + static_cast<std::ptrdiff_t>(n)));
  }

  /// Overwrite slice `index` along axis 0 with `part`.
  void set_slice(std::size_t index, const BasicTensor& part) {
    if (rank() < 2 || index >= shape_[0]) throw std::out_of_range("tensor slice out of range");
    if (!std::equal(shape_.begin() + 1, shape_.end(), part.shape().begin(), part.shape().end())) {
      throw std::invalid_argument("slice shape " + to_string(part.shape()) + " does not fit " + to_string(shape_));
    }
    std::copy(part.values().begin(), part.values().end(), data_.begin() + static_cast<std::ptrdiff_t>(index * part.size()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Stack equally-shaped tensors along a new leading axis.
template <typename T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("stack of zero tensors");
  Shape shape{parts.size()};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  BasicTensor<T> out(shape);
  for (std::size_t i = 0; i < parts.size(); ++i) out.set_slice(i, parts[i]);
  return out;
}

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b) {
  if (a != b) throw std::invalid_argument("shape mismatch: " + to_string(a) + " vs " + to_string(b));
}

template <typename T, typename Op>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, Op op) {
  require_same_shape(a.shape(), b.shape());
  BasicTensor<T> out(a.shape());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.values().begin(), op);
  return out;
}

template <typename T, typename Op>
BasicTensor<T> map(const BasicTensor<T>& a, Op op) {
  BasicTensor<T> out(a.shape());
  std::transform(a.values().begin(), a.values().end(), out.values().begin(), op);
  return out;
}

}  // namespace detail

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, std::plus<T>{});
}
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, T b) {
  return detail::map(a, [b](T v) { return v + b; });
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, std::minus<T>{});
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, T b) {
  return detail::map(a, [b](T v) { return v - b; });
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::zip(a, b, std::multiplies<T>{});
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, T b) {
  return detail::map(a, [b](T v) { return v * b; });
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi) {
  if (lo > hi) throw std::invalid_argument("clamp bounds inverted");
  return detail::map(a, [lo, hi](T v) { return std::clamp(v, lo, hi); });
}

/// Elementwise -1 / 0 / +1; sign(0) == 0.
template <typename T>
BasicTensor<T> sign(const BasicTensor<T>& a) {
  return detail::map(a, [](T v) { return static_cast<T>((T{0} < v) - (v < T{0})); });
}

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) { return add(a, b); }
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) { return sub(a, b); }
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, T b) { return mul(a, b); }

/// In-place a += b.
template <typename T>
void accumulate(BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
T l1_norm(const BasicTensor<T>& a) {
  T sum{0};
  for (T v : a.values()) sum += std::abs(v);
  return sum;
}

template <typename T>
T linf_norm(const BasicTensor<T>& a) {
  T m{0};
  for (T v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

/// Inner product accumulated in double.
template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape());
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Shape and raw bytes identical (distinguishes -0 from +0, compares NaN payloads).
template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace cwt
