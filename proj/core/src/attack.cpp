#include "cwt/attack.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace cwt {

double AttackConfig::step_size() const noexcept {
  if (alpha) return *alpha;
  return iters > 0 ? eps / static_cast<double>(iters) : eps;
}

std::size_t AttackConfig::copies_for(const TransformPlugin& plugin) const noexcept {
  return num_copies.value_or(plugin.default_copies());
}

void AttackConfig::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("attack: eps must be > 0");
  if (!(step_size() > 0.0)) throw std::invalid_argument("attack: alpha must be > 0");
  if (!(mu >= 0.0)) throw std::invalid_argument("attack: mu must be >= 0");
  if (num_copies && *num_copies == 0) throw std::invalid_argument("attack: num_copies must be >= 1");
}

AttackState AttackState::start(const Tensor& x) { return {Tensor(x.shape()), x, 0}; }

Tensor averaged_gradient(const Model& model, const Tensor& x_adv, int label, const TransformPlugin& plugin,
                         std::size_t num_copies, const Rng& rng, float* loss) {
  if (x_adv.rank() != 3) throw std::invalid_argument("averaged_gradient expects a [C,H,W] image");
  if (num_copies == 0) throw std::invalid_argument("averaged_gradient needs at least one copy");
  const std::size_t H = x_adv.dim(1), W = x_adv.dim(2);

  std::vector<std::unique_ptr<TransformInstance>> copies;
  std::vector<Tensor> inputs;
  copies.reserve(num_copies);
  inputs.reserve(num_copies);
  for (std::size_t i = 0; i < num_copies; ++i) {
    Rng stream = rng.split(i);
    copies.push_back(plugin.sample(H, W, i, stream));
    inputs.push_back(copies.back()->forward(x_adv));
  }
  const std::vector<int> labels(num_copies, label);
  // Mean reduction already carries the 1/N of the average.
  auto [batch_loss, grad] = loss_and_input_grad(model, stack<float>(inputs), labels);
  if (loss) *loss = batch_loss;

  Tensor g_bar = copies[0]->vjp(grad.slice(0));
  for (std::size_t i = 1; i < num_copies; ++i) accumulate(g_bar, copies[i]->vjp(grad.slice(i)));
  return g_bar;
}

AttackState mifgsm_step(AttackState state, const Tensor& x_clean, const AttackConfig& config, const Tensor& g_bar) {
  detail::require_same_shape(g_bar.shape(), x_clean.shape());
  detail::require_same_shape(state.x_adv.shape(), x_clean.shape());
  const float norm = l1_norm(g_bar);
  const auto mu = static_cast<float>(config.mu);
  const auto alpha = static_cast<float>(config.step_size());
  const auto eps = static_cast<float>(config.eps);
  for (std::size_t k = 0; k < x_clean.size(); ++k) {
    const float normalized = norm > 0.0f ? g_bar[k] / norm : 0.0f;
    const float g = mu * state.momentum[k] + normalized;
    state.momentum[k] = g;
    const float stepped = state.x_adv[k] + alpha * static_cast<float>((0.0f < g) - (g < 0.0f));
    const float delta = std::clamp(stepped - x_clean[k], -eps, eps);
    state.x_adv[k] = std::clamp(x_clean[k] + delta, 0.0f, 1.0f);
  }
  ++state.iteration;
  return state;
}

Tensor attack(const Model& model, const Tensor& x, int label, const AttackConfig& config, const TransformPlugin& plugin,
              std::uint64_t stream, const std::function<void(const IterationLog&)>& on_iteration) {
  config.validate();
  const std::size_t copies = config.copies_for(plugin);
  const Rng image_rng = Rng::split(config.seed, stream);
  AttackState state = AttackState::start(x);
  for (std::size_t t = 0; t < config.iters; ++t) {
    float loss = 0.0f;
    const Tensor g_bar = averaged_gradient(model, state.x_adv, label, plugin, copies, image_rng.split(t), &loss);
    state = mifgsm_step(std::move(state), x, config, g_bar);
    if (on_iteration) on_iteration({t + 1, loss, linf_norm(state.x_adv - x)});
  }
  return state.x_adv;
}

Tensor attack_batch(const Model& model, const Tensor& images, std::span<const int> labels, const AttackConfig& config,
                    const TransformPlugin& plugin, std::size_t threads) {
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("attack_batch: " + std::to_string(labels.size()) + " labels for images " +
                                to_string(images.shape()));
  }
  config.validate();
  Tensor out(images.shape());
  const std::size_t n = labels.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out.set_slice(i, attack(model, images.slice(i), labels[i], config, plugin, i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace cwt
