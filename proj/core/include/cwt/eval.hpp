#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwt/attack.hpp"
#include "cwt/dataset.hpp"
#include "cwt/nn.hpp"
#include "cwt/plugin.hpp"

namespace cwt {

/// Percentage of `adv_images` the model does not assign to their label.
double attack_success_rate(const Model& model, const Tensor& adv_images, std::span<const int> labels);

struct Aggregate {
  double mean = 0.0;
  double std_dev = 0.0;         ///< population (divide by n)
  double sample_std_dev = 0.0;  ///< divide by n - 1; NaN for a single value
};

/// Mean and standard deviations. Throws on an empty list.
Aggregate aggregate(std::span<const double> values);

struct NamedModel {
  std::string id;
  const Model* model = nullptr;
};

/// ASR of one attack crafted on `surrogate`, across targets. The surrogate's own
/// (white-box) column is always present, flagged, and counted in mean / std_dev.
struct AsrReport {
  std::string attack;
  std::string surrogate;
  std::vector<std::string> targets;
  std::vector<double> asr;  ///< percent, per target
  std::vector<bool> is_surrogate;
  double mean = 0.0;
  double std_dev = 0.0;
  std::size_t samples = 0;
  std::map<std::string, std::string> config;

  /// Mean over the non-surrogate columns; NaN when there are none.
  double black_box_mean() const;
};

/// An attack to evaluate: a plugin plus the name it is reported under.
struct AttackEntry {
  std::string name;
  const TransformPlugin* plugin = nullptr;
};

struct EvalOptions {
  std::size_t max_images = 0;  ///< 0 = every commonly-correct image
  std::size_t threads = 1;
};

/// Keeps the images every model (surrogate and targets) classifies correctly,
/// crafts adversarials on the surrogate once per attack, and scores them on
/// every target. Throws when no image is correct for all models.
std::vector<AsrReport> evaluate_transfer(const NamedModel& surrogate, std::span<const NamedModel> targets,
                                         const Dataset& data, const AttackConfig& config,
                                         std::span<const AttackEntry> attacks, const EvalOptions& options = {});

enum class SweepParam { Blocks, ScaleMax, MaxAngle, RotatedBlocks, Copies, PreInterpolation };

/// blocks, smax, rot-max, rot-k, copies, pre-interp.
SweepParam parse_sweep_param(std::string_view name);
std::string_view to_string(SweepParam param) noexcept;

/// `base` with one parameter replaced; throws std::invalid_argument on a value
/// the parameter cannot take. A blocks sweep caps rotated_blocks at blocks^2.
CwtParams with_sweep_value(const CwtParams& base, SweepParam param, double value);

/// One CWT report per value, everything else held at `base`.
std::vector<AsrReport> sweep(SweepParam param, std::span<const double> values, const CwtParams& base,
                             const NamedModel& surrogate, std::span<const NamedModel> targets, const Dataset& data,
                             const AttackConfig& config, const EvalOptions& options = {});

/// Header `attack,surrogate,target,asr,is_surrogate`; each report ends with
/// `attack,surrogate,MEAN,<mean>,` and `attack,surrogate,STD,<std>,` rows.
void write_csv(std::ostream& out, std::span<const AsrReport> reports);

/// Aligned, human-readable table; white-box entries carry a '*'.
void print_table(std::ostream& out, std::span<const AsrReport> reports);

}  // namespace cwt
