#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "cwt/dataset.hpp"
#include "cwt/nn.hpp"
#include "cwt/plugin.hpp"
#include "cwt/rng.hpp"
#include "cwt/tensor.hpp"

namespace cwt {

/// Untargeted L-infinity MI-FGSM settings. Pixel units, images in [0,1].
struct AttackConfig {
  double eps = 16.0 / 255.0;
  std::size_t iters = 10;
  std::optional<double> alpha;            ///< step size; eps / iters when unset
  double mu = 1.0;                        ///< momentum decay
  std::optional<std::size_t> num_copies;  ///< transformed copies per gradient; plugin default when unset
  std::uint64_t seed = 0;

  double step_size() const noexcept;
  std::size_t copies_for(const TransformPlugin& plugin) const noexcept;
  /// Throws std::invalid_argument on eps <= 0, alpha <= 0, mu < 0 or zero copies.
  /// iters == 0 is accepted and makes the attack a no-op.
  void validate() const;
};

struct AttackState {
  Tensor momentum;  ///< g_t
  Tensor x_adv;
  std::size_t iteration = 0;

  static AttackState start(const Tensor& x);
};

/// Mean over `num_copies` sampled transforms of the input gradient of the
/// cross-entropy, pulled back through each transform. Copy i samples from
/// rng.split(i); per-copy contributions are summed in ascending copy order.
/// The batch loss (mean over copies) is written to `loss` when given.
Tensor averaged_gradient(const Model& model, const Tensor& x_adv, int label, const TransformPlugin& plugin,
                         std::size_t num_copies, const Rng& rng, float* loss = nullptr);

/// One momentum step: g = mu * g + g_bar / |g_bar|_1 (0 when the norm is 0),
/// x += alpha * sign(g), then projection onto the eps-ball around `x_clean`
/// intersected with [0,1].
AttackState mifgsm_step(AttackState state, const Tensor& x_clean, const AttackConfig& config, const Tensor& g_bar);

struct IterationLog {
  std::size_t iteration;
  double loss;  ///< averaged loss before the step
  double linf;  ///< |x_adv - x|_inf after the step
};

/// Runs config.iters steps from x_adv = x, g = 0. `stream` selects the random
/// stream (Rng::split(config.seed, stream)); iteration t draws from its split(t).
Tensor attack(const Model& model, const Tensor& x, int label, const AttackConfig& config, const TransformPlugin& plugin,
              std::uint64_t stream = 0, const std::function<void(const IterationLog&)>& on_iteration = {});

/// Attacks every image of a [B,C,H,W] batch; image i uses stream i. Results do
/// not depend on `threads`.
Tensor attack_batch(const Model& model, const Tensor& images, std::span<const int> labels, const AttackConfig& config,
                    const TransformPlugin& plugin, std::size_t threads = 1);

}  // namespace cwt
