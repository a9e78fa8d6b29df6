#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cwt/image_ops.hpp"
#include "cwt/tensor.hpp"

namespace cwt::cli {

using ResizeVjp = std::function<Tensor(const Tensor&, std::size_t, std::size_t, Interpolation)>;

/// Substitutes for library functions, so tests can check that a broken
/// implementation is caught.
struct SelfcheckHooks {
  ResizeVjp resize_vjp;  ///< defaults to cwt::resize_vjp<float>
};

struct GroupResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst = 0.0;  ///< largest error seen, in the group's own metric
  std::string first_failure;

  bool passed() const noexcept { return checks > 0 && failures == 0; }
};

/// adjoint, finite-difference, identity, aggregation.
std::vector<GroupResult> run_selfcheck(std::uint64_t seed, const SelfcheckHooks& hooks = {});

}  // namespace cwt::cli
