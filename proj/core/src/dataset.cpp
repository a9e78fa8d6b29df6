#include "cwt/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace cwt {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("empty dataset subset");
  const std::size_t per = images.size() / size();
  Shape shape = images.shape();
  shape[0] = indices.size();
  Dataset out{Tensor(shape), {}, num_classes, split};
  out.labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    if (i >= size()) throw std::out_of_range("dataset index " + std::to_string(i) + " out of range");
    std::copy_n(images.data() + i * per, per, out.images.data() + j * per);
    out.labels.push_back(labels[i]);
  }
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return subset(idx);
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset has images " + to_string(images.shape()) + " but " +
                                std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("dataset label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace cwt
