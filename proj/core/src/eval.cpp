#include "cwt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cwt/data_io.hpp"

namespace cwt {

double attack_success_rate(const Model& model, const Tensor& adv_images, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("attack success rate over an empty set");
  const auto pred = predict(model, adv_images);
  if (pred.size() != labels.size()) throw std::invalid_argument("attack_success_rate: label count mismatch");
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) fooled += pred[i] != labels[i];
  return 100.0 * static_cast<double>(fooled) / static_cast<double>(pred.size());
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate of an empty list");
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  const double sample = values.size() > 1 ? std::sqrt(sq / (n - 1)) : std::numeric_limits<double>::quiet_NaN();
  return {mean, std::sqrt(sq / n), sample};
}

double AsrReport::black_box_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < asr.size(); ++i) {
    if (is_surrogate[i]) continue;
    sum += asr[i];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::map<std::string, std::string> snapshot(const AttackConfig& config, std::size_t copies) {
  return {{"eps", fmt(config.eps)}, {"iters", std::to_string(config.iters)}, {"alpha", fmt(config.step_size())},
          {"mu", fmt(config.mu)},   {"copies", std::to_string(copies)},      {"seed", std::to_string(config.seed)}};
}

}  // namespace

std::vector<AsrReport> evaluate_transfer(const NamedModel& surrogate, std::span<const NamedModel> targets,
                                         const Dataset& data, const AttackConfig& config,
                                         std::span<const AttackEntry> attacks, const EvalOptions& options) {
  if (!surrogate.model) throw std::invalid_argument("evaluate_transfer: missing surrogate model");
  std::vector<NamedModel> columns;
  const bool listed = std::any_of(targets.begin(), targets.end(), [&](const NamedModel& t) {
    return t.model == surrogate.model || t.id == surrogate.id;
  });
  if (!listed) columns.push_back(surrogate);
  columns.insert(columns.end(), targets.begin(), targets.end());

  std::vector<const Model*> all;
  for (const auto& c : columns) {
    if (!c.model) throw std::invalid_argument("evaluate_transfer: target '" + c.id + "' has no model");
    all.push_back(c.model);
  }
  Dataset eval = filter_correct(data, all);
  if (options.max_images > 0 && eval.size() > options.max_images) eval = eval.head(options.max_images);

  std::vector<AsrReport> reports;
  for (const AttackEntry& entry : attacks) {
    if (!entry.plugin) throw std::invalid_argument("evaluate_transfer: attack '" + entry.name + "' has no plugin");
    const Tensor adv = attack_batch(*surrogate.model, eval.images, eval.labels, config, *entry.plugin, options.threads);
    AsrReport r;
    r.attack = entry.name;
    r.surrogate = surrogate.id;
    r.samples = eval.size();
    r.config = snapshot(config, config.copies_for(*entry.plugin));
    r.config["plugin"] = std::string(entry.plugin->name());
    for (const NamedModel& c : columns) {
      r.targets.push_back(c.id);
      r.asr.push_back(attack_success_rate(*c.model, adv, eval.labels));
      r.is_surrogate.push_back(c.model == surrogate.model || c.id == surrogate.id);
    }
    const Aggregate agg = aggregate(r.asr);
    r.mean = agg.mean;
    r.std_dev = agg.std_dev;
    reports.push_back(std::move(r));
  }
  return reports;
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "blocks") return SweepParam::Blocks;
  if (name == "smax") return SweepParam::ScaleMax;
  if (name == "rot-max") return SweepParam::MaxAngle;
  if (name == "rot-k") return SweepParam::RotatedBlocks;
  if (name == "copies") return SweepParam::Copies;
  if (name == "pre-interp") return SweepParam::PreInterpolation;
  throw std::invalid_argument("unknown sweep parameter '" + std::string(name) + "'");
}

std::string_view to_string(SweepParam param) noexcept {
  switch (param) {
    case SweepParam::Blocks: return "blocks";
    case SweepParam::ScaleMax: return "smax";
    case SweepParam::MaxAngle: return "rot-max";
    case SweepParam::RotatedBlocks: return "rot-k";
    case SweepParam::Copies: return "copies";
    case SweepParam::PreInterpolation: return "pre-interp";
  }
  return "?";
}

CwtParams with_sweep_value(const CwtParams& base, SweepParam param, double value) {
  auto as_count = [&](double lo) {
    if (!(value >= lo) || value != std::floor(value)) {
      throw std::invalid_argument("sweep " + std::string(to_string(param)) + ": invalid value " + fmt(value));
    }
    return static_cast<std::size_t>(value);
  };
  CwtParams p = base;
  switch (param) {
    case SweepParam::Blocks:
      p.blocks = as_count(1);
      p.rotated_blocks = std::min(p.rotated_blocks, p.blocks * p.blocks);
      break;
    case SweepParam::ScaleMax: p.scale_max = value; break;
    case SweepParam::MaxAngle: p.max_angle_deg = value; break;
    case SweepParam::RotatedBlocks: p.rotated_blocks = as_count(0); break;
    case SweepParam::Copies: p.num_copies = as_count(1); break;
    case SweepParam::PreInterpolation:
      if (value != 0.0 && value != 1.0) throw std::invalid_argument("sweep pre-interp: value must be 0 or 1");
      p.pre_interpolation = value == 1.0;
      break;
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("sweep " + std::string(to_string(param)) + "=" + fmt(value) + ": " + e.what());
  }
  return p;
}

std::vector<AsrReport> sweep(SweepParam param, std::span<const double> values, const CwtParams& base,
                             const NamedModel& surrogate, std::span<const NamedModel> targets, const Dataset& data,
                             const AttackConfig& config, const EvalOptions& options) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::vector<CwtParams> settings;
  for (double v : values) settings.push_back(with_sweep_value(base, param, v));

  std::vector<AsrReport> reports;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    PluginOptions po;
    po.cwt = settings[i];
    const auto plugin = make_plugin("cwt", po);
    AttackConfig cfg = config;
    if (param == SweepParam::Copies) cfg.num_copies = settings[i].num_copies;
    const AttackEntry entry{"cwt[" + std::string(to_string(param)) + "=" + fmt(values[i]) + "]", plugin.get()};
    auto r = evaluate_transfer(surrogate, targets, data, cfg, std::span(&entry, 1), options);
    r[0].config[std::string(to_string(param))] = fmt(values[i]);
    reports.push_back(std::move(r[0]));
  }
  return reports;
}

void write_csv(std::ostream& out, std::span<const AsrReport> reports) {
  out << "attack,surrogate,target,asr,is_surrogate\n";
  for (const AsrReport& r : reports) {
    for (std::size_t i = 0; i < r.targets.size(); ++i) {
      out << r.attack << "," << r.surrogate << "," << r.targets[i] << "," << fmt(r.asr[i]) << ","
          << (r.is_surrogate[i] ? 1 : 0) << "\n";
    }
    out << r.attack << "," << r.surrogate << ",MEAN," << fmt(r.mean) << ",\n";
    out << r.attack << "," << r.surrogate << ",STD," << fmt(r.std_dev) << ",\n";
  }
}

void print_table(std::ostream& out, std::span<const AsrReport> reports) {
  if (reports.empty()) return;
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, r.attack.size());
  const auto& cols = reports.front().targets;
  std::vector<std::size_t> widths;
  out << std::left << std::setw(static_cast<int>(name_w + 2)) << "attack";
  for (const auto& c : cols) {
    widths.push_back(std::max<std::size_t>(c.size() + 1, 8));
    out << std::right << std::setw(static_cast<int>(widths.back() + 1)) << c;
  }
  out << std::setw(8) << "mean" << std::setw(8) << "std" << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(name_w + 2)) << r.attack << std::right;
    for (std::size_t i = 0; i < r.asr.size(); ++i) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1) << r.asr[i] << (r.is_surrogate[i] ? "*" : " ");
      out << std::setw(static_cast<int>(i < widths.size() ? widths[i] + 1 : 9)) << cell.str();
    }
    out << std::fixed << std::setprecision(1) << std::setw(8) << r.mean << std::setw(8) << r.std_dev << "\n";
    out.unsetf(std::ios::fixed);
  }
  out << "(" << reports.front().samples << " images; * = surrogate)\n";
}

}  // namespace cwt
