#include "cwt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "CLI11.hpp"
#include "cwt/attack.hpp"
#include "cwt/data_io.hpp"
#include "cwt/eval.hpp"
#include "cwt/explain.hpp"
#include "cwt/nn.hpp"
#include "cwt/plugin.hpp"
#include "cwt/selfcheck.hpp"

#ifndef CWT_VERSION
#define CWT_VERSION "0.0.0"
#endif

namespace cwt::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string version() { return CWT_VERSION; }

// ---------------------------------------------------------------------------
// Manifest

Json RunManifest::to_json() const {
  Json j;
  j["subcommand"] = subcommand;
  j["version"] = version;
  j["seed"] = seed;
  j["flags"] = flags;
  j["outputs"] = outputs;
  j["results"] = results;
  return j;
}

RunManifest RunManifest::from_json(const Json& j) {
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.version = j.value("version", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.flags = j.at("flags");
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.results = j.value("results", Json::object());
  return m;
}

namespace {

std::string scalar_arg(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::vector<std::string> RunManifest::replay_args() const {
  std::vector<std::string> args{subcommand};
  for (const auto& [key, value] : flags.items()) {
    if (value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
      continue;
    }
    args.push_back("--" + key);
    if (value.is_array()) {
      for (const auto& v : value) args.push_back(scalar_arg(v));
    } else {
      args.push_back(scalar_arg(value));
    }
  }
  return args;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Converts invalid flag combinations detected by the library into usage errors.
template <typename F>
auto validated(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void write_manifest(const RunManifest& m, const fs::path& out) {
  const fs::path path = out.string() + ".manifest.json";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << m.to_json().dump(2) << "\n";
}

std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> expand_config(std::vector<std::string> args) {
  fs::path config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config requires a file");
      config = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config.empty()) return args;

  std::ifstream in(config);
  if (!in) throw std::runtime_error("cannot read config file " + config.string());
  auto given = [&](const std::string& key) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == "--" + key || a.rfind("--" + key + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(config.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError(config.string() + ":" + std::to_string(lineno) + ": empty key");
    if (given(key) || value == "false") continue;
    extra.push_back("--" + key);
    if (value == "true") continue;
    std::istringstream tokens(value);
    for (std::string t; tokens >> t;) extra.push_back(t);
  }
  const auto at = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.rfind('-', 0) != 0; });
  const auto pos = at == args.end() ? args.end() : at + 1;
  args.insert(pos, extra.begin(), extra.end());
  return args;
}

namespace {

// ---------------------------------------------------------------------------
// Shared flag groups

struct AttackFlags {
  std::vector<std::string> attacks{"cwt"};
  double eps = 16.0 / 255.0;
  std::size_t iters = 10;
  double alpha = 0.0;
  double mu = 1.0;
  std::size_t copies = 0;
  std::size_t blocks = 2;
  double smin = 1.0;
  double smax = 1.3;
  double rot_max = 26.0;
  std::size_t rot_k = 2;
  bool no_pre_interp = false;
  std::string kernel = "bilinear";
  std::uint64_t seed = 0;
  std::size_t max_images = 0;
  std::size_t threads = default_threads();

  CLI::Option* alpha_opt = nullptr;
  CLI::Option* copies_opt = nullptr;
  bool multi = false;

  void add(CLI::App* cmd, bool multiple_attacks) {
    multi = multiple_attacks;
    std::vector<std::string> names = plugin_names();
    names.insert(names.begin(), "mifgsm");
    auto* a = multiple_attacks ? cmd->add_option("--attack", attacks, "Attack(s) to run")
                               : cmd->add_option("--attack", attacks.front(), "Attack to run");
    a->check(CLI::IsMember(names))->capture_default_str();
    cmd->add_option("--eps", eps, "L-inf budget")->capture_default_str();
    cmd->add_option("--iters", iters, "Iterations T")->capture_default_str();
    alpha_opt = cmd->add_option("--alpha", alpha, "Step size (default eps / iters)");
    cmd->add_option("--mu", mu, "Momentum decay")->capture_default_str();
    copies_opt = cmd->add_option("--copies", copies, "Transformed copies per gradient (default: attack's own)");
    cmd->add_option("--blocks", blocks, "CWT grid size n")->capture_default_str();
    cmd->add_option("--smin", smin, "CWT minimum scale")->capture_default_str();
    cmd->add_option("--smax", smax, "CWT maximum scale")->capture_default_str();
    cmd->add_option("--rot-max", rot_max, "CWT maximum rotation (degrees)")->capture_default_str();
    cmd->add_option("--rot-k", rot_k, "CWT rotated blocks per copy")->capture_default_str();
    cmd->add_flag("--no-pre-interp", no_pre_interp, "Disable CWT pre-interpolation");
    cmd->add_option("--kernel", kernel, "Interpolation kernel")
        ->check(CLI::IsMember({"bilinear", "nearest"}))
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_option("--max-images", max_images, "Use at most this many images (0 = all)")->capture_default_str();
    cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  }

  AttackConfig config() const {
    AttackConfig c;
    c.eps = eps;
    c.iters = iters;
    if (alpha_opt->count()) c.alpha = alpha;
    c.mu = mu;
    if (copies_opt->count()) c.num_copies = copies;
    c.seed = seed;
    validated([&] {
      c.validate();
      return 0;
    });
    return c;
  }

  PluginOptions plugin_options() const {
    PluginOptions o;
    o.cwt.blocks = blocks;
    o.cwt.scale_min = smin;
    o.cwt.scale_max = smax;
    o.cwt.max_angle_deg = rot_max;
    o.cwt.rotated_blocks = rot_k;
    o.cwt.pre_interpolation = !no_pre_interp;
    o.cwt.kernel = parse_interpolation(kernel);
    o.dim.kernel = o.cwt.kernel;
    o.bsr.kernel = o.cwt.kernel;
    validated([&] {
      o.cwt.validate();
      return 0;
    });
    return o;
  }

  void to_json(Json& j) const {
    if (multi) {
      j["attack"] = attacks;
    } else {
      j["attack"] = attacks.front();
    }
    j["eps"] = eps;
    j["iters"] = iters;
    if (alpha_opt->count()) j["alpha"] = alpha;
    j["mu"] = mu;
    if (copies_opt->count()) j["copies"] = copies;
    j["blocks"] = blocks;
    j["smin"] = smin;
    j["smax"] = smax;
    j["rot-max"] = rot_max;
    j["rot-k"] = rot_k;
    j["no-pre-interp"] = no_pre_interp;
    j["kernel"] = kernel;
    j["seed"] = seed;
    j["max-images"] = max_images;
    j["threads"] = threads;
  }
};

Dataset load_data(const std::string& path, std::size_t max_images) {
  Dataset d = load_dataset(path);
  return max_images > 0 ? d.head(max_images) : d;
}

ModelSpec resolve_spec(const std::string& spec) {
  const auto names = builtin_spec_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) return builtin_spec(spec);
  std::ifstream in(spec);
  if (!in) throw std::runtime_error("cannot read model spec '" + spec + "' (not a file or built-in name)");
  std::stringstream text;
  text << in.rdbuf();
  return ModelSpec::parse(text.str());
}

std::string model_id(const std::string& path) { return fs::path(path).stem().string(); }

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v << "%";
  return s.str();
}

// ---------------------------------------------------------------------------
// Subcommands

struct TrainCmd {
  std::string spec, dataset, test_dataset, out;
  std::size_t epochs = 5, batch = 32;
  double lr = 0.05, momentum = 0.9;
  std::uint64_t seed = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a model and write a checkpoint");
    c->add_option("--spec", spec, "Built-in spec name or spec file")->required();
    c->add_option("--dataset", dataset, "Training data (IDX prefix or CIFAR .bin)")->required();
    c->add_option("--test-dataset", test_dataset, "Held-out data for the final accuracy");
    c->add_option("--epochs", epochs)->capture_default_str();
    c->add_option("--lr", lr, "Learning rate")->capture_default_str();
    c->add_option("--momentum", momentum)->capture_default_str();
    c->add_option("--batch", batch)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--out", out, "Checkpoint path")->required();
  }

  RunManifest run(std::ostream& out_stream) const {
    const ModelSpec model_spec = resolve_spec(spec);
    const Dataset train_set = load_dataset(dataset);
    TrainOptions o;
    o.epochs = epochs;
    o.learning_rate = lr;
    o.momentum = momentum;
    o.batch_size = batch;
    o.seed = seed;
    Checkpoint ckpt = train(model_spec, train_set, o, [&](std::size_t e, double loss) {
      out_stream << "epoch " << e + 1 << "/" << epochs << "  loss " << std::setprecision(6) << loss << "\n";
    });
    ckpt.metadata["spec"] = spec;
    ckpt.metadata["dataset"] = dataset;
    ckpt.metadata["epochs"] = std::to_string(epochs);
    ckpt.metadata["seed"] = std::to_string(seed);

    RunManifest m;
    const double train_acc = accuracy(ckpt.model, train_set);
    out_stream << "train accuracy: " << pct(100.0 * train_acc) << "\n";
    m.results["train_accuracy"] = train_acc;
    if (!test_dataset.empty()) {
      const double test_acc = accuracy(ckpt.model, load_dataset(test_dataset));
      out_stream << "test accuracy:  " << pct(100.0 * test_acc) << "\n";
      m.results["test_accuracy"] = test_acc;
    }
    write_checkpoint(out, ckpt);
    m.flags = {{"spec", spec}, {"dataset", dataset}};
    if (!test_dataset.empty()) m.flags["test-dataset"] = test_dataset;
    m.flags["epochs"] = epochs;
    m.flags["lr"] = lr;
    m.flags["momentum"] = momentum;
    m.flags["batch"] = batch;
    m.flags["seed"] = seed;
    m.flags["out"] = out;
    m.seed = seed;
    m.outputs = {out};
    return m;
  }
};

struct AttackCmd {
  std::string surrogate, dataset, out;
  AttackFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("attack", "Craft adversarial examples on a surrogate");
    c->add_option("--surrogate", surrogate, "Surrogate checkpoint")->required();
    c->add_option("--dataset", dataset, "Images to attack")->required();
    c->add_option("--out", out, "Output TNSR file")->required();
    flags.add(c, false);
  }

  RunManifest run(std::ostream& os) const {
    const AttackConfig config = flags.config();
    const auto plugin = validated([&] { return make_plugin(flags.attacks.front(), flags.plugin_options()); });
    const Model model = read_checkpoint(surrogate).model;
    const Dataset data = load_data(dataset, flags.max_images);
    const Tensor adv = attack_batch(model, data.images, data.labels, config, *plugin, flags.threads);
    write_tensor(out, adv);

    const double linf = linf_norm(adv - data.images);
    const double asr = attack_success_rate(model, adv, data.labels);
    os << "attack " << flags.attacks.front() << ": " << data.size() << " images, copies "
       << config.copies_for(*plugin) << ", max |x_adv - x|_inf " << std::setprecision(8) << linf << " (eps "
       << config.eps << ")\n";
    os << "surrogate error on adversarials: " << pct(asr) << "\n";

    RunManifest m;
    m.flags = {{"surrogate", surrogate}, {"dataset", dataset}, {"out", out}};
    flags.to_json(m.flags);
    m.seed = flags.seed;
    m.outputs = {out};
    m.results = {{"images", data.size()}, {"max_linf", linf}, {"surrogate_error", asr}};
    return m;
  }
};

struct VerifyCmd {
  std::string dataset, adv, out;
  double eps = 16.0 / 255.0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("verify", "Check an adversarial batch against the L-inf budget and [0,1]");
    c->add_option("--dataset", dataset, "Clean images (first N are compared)")->required();
    c->add_option("--adv", adv, "Adversarial TNSR file")->required();
    c->add_option("--eps", eps)->capture_default_str();
    c->add_option("--out", out, "Optional path; a manifest is written next to it");
  }

  int run(std::ostream& os) const {
    const Tensor x_adv = read_tensor(adv);
    if (x_adv.rank() != 4) throw std::runtime_error("verify: expected a [B,C,H,W] batch, got " + to_string(x_adv.shape()));
    const Dataset clean = load_data(dataset, x_adv.dim(0));
    if (clean.images.shape() != x_adv.shape()) {
      throw std::runtime_error("verify: shape " + to_string(x_adv.shape()) + " does not match dataset " +
                               to_string(clean.images.shape()));
    }
    const double bound = eps + std::ldexp(1.0, -20);
    const double linf = linf_norm(x_adv - clean.images);
    const auto [lo, hi] = std::minmax_element(x_adv.values().begin(), x_adv.values().end());
    const bool ok = linf <= bound && *lo >= 0.0f && *hi <= 1.0f;
    os << std::setprecision(8) << "max |x_adv - x|_inf " << linf << " (bound " << bound << "), range [" << *lo << ", "
       << *hi << "]: " << (ok ? "PASS" : "FAIL") << "\n";
    if (!out.empty()) {
      RunManifest m;
      m.subcommand = "verify";
      m.flags = {{"dataset", dataset}, {"adv", adv}, {"eps", eps}, {"out", out}};
      m.results = {{"max_linf", linf}, {"min", *lo}, {"max", *hi}, {"passed", ok}};
      m.version = version();
      std::ofstream(out) << (ok ? "PASS\n" : "FAIL\n");
      m.outputs = {out};
      write_manifest(m, out);
    }
    return ok ? kOk : kCheckFailed;
  }
};

struct ZooFlags {
  std::string surrogate, dataset, out;
  std::vector<std::string> targets;

  void add(CLI::App* c) {
    c->add_option("--surrogate", surrogate, "Surrogate checkpoint")->required();
    c->add_option("--targets", targets, "Target checkpoints");
    c->add_option("--dataset", dataset, "Evaluation images")->required();
    c->add_option("--out", out, "CSV report")->required();
  }

  struct Loaded {
    std::vector<std::unique_ptr<Model>> storage;
    NamedModel surrogate;
    std::vector<NamedModel> targets;
  };

  Loaded load() const {
    Loaded z;
    const fs::path sur_path = fs::weakly_canonical(surrogate);
    z.storage.push_back(std::make_unique<Model>(read_checkpoint(surrogate).model));
    z.surrogate = {model_id(surrogate), z.storage.back().get()};
    for (const std::string& t : targets) {
      if (fs::weakly_canonical(t) == sur_path) {
        z.targets.push_back(z.surrogate);
        continue;
      }
      z.storage.push_back(std::make_unique<Model>(read_checkpoint(t).model));
      std::string id = model_id(t);
      const bool clash = id == z.surrogate.id || std::any_of(z.targets.begin(), z.targets.end(),
                                                                [&](const NamedModel& n) { return n.id == id; });
      z.targets.push_back({clash ? t : id, z.storage.back().get()});
    }
    return z;
  }

  void to_json(Json& j) const {
    j["surrogate"] = surrogate;
    j["targets"] = targets;
    j["dataset"] = dataset;
    j["out"] = out;
  }
};

void write_report(const std::string& path, std::span<const AsrReport> reports) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_csv(f, reports);
}

Json report_results(std::span<const AsrReport> reports) {
  Json j = Json::array();
  for (const auto& r : reports) {
    j.push_back({{"attack", r.attack}, {"mean", r.mean}, {"std", r.std_dev}, {"samples", r.samples}});
  }
  return {{"reports", j}};
}

struct EvalCmd {
  ZooFlags zoo;
  AttackFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Transfer ASR of attacks crafted on a surrogate");
    zoo.add(c);
    flags.add(c, true);
  }

  RunManifest run(std::ostream& os) const {
    const AttackConfig config = flags.config();
    const PluginOptions po = flags.plugin_options();
    std::vector<std::unique_ptr<TransformPlugin>> plugins;
    std::vector<AttackEntry> entries;
    for (const auto& name : flags.attacks) {
      plugins.push_back(validated([&] { return make_plugin(name, po); }));
      entries.push_back({name, plugins.back().get()});
    }
    const auto z = zoo.load();
    const Dataset data = load_dataset(zoo.dataset);
    const auto reports =
        evaluate_transfer(z.surrogate, z.targets, data, config, entries, {flags.max_images, flags.threads});
    print_table(os, reports);
    write_report(zoo.out, reports);

    RunManifest m;
    zoo.to_json(m.flags);
    flags.to_json(m.flags);
    m.seed = flags.seed;
    m.outputs = {zoo.out};
    m.results = report_results(reports);
    return m;
  }
};

struct SweepCmd {
  ZooFlags zoo;
  AttackFlags flags;
  std::string param;
  std::vector<double> values;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("sweep", "CWT transfer ASR while varying one parameter");
    c->add_option("--param", param, "blocks|smax|rot-max|rot-k|copies|pre-interp")->required();
    c->add_option("--values", values, "Values to try")->required();
    zoo.add(c);
    flags.add(c, false);
  }

  RunManifest run(std::ostream& os) const {
    const SweepParam p = validated([&] { return parse_sweep_param(param); });
    const AttackConfig config = flags.config();
    const PluginOptions po = flags.plugin_options();
    for (double v : values) validated([&] { return with_sweep_value(po.cwt, p, v); });
    const auto z = zoo.load();
    const Dataset data = load_dataset(zoo.dataset);
    const auto reports =
        sweep(p, values, po.cwt, z.surrogate, z.targets, data, config, {flags.max_images, flags.threads});
    print_table(os, reports);
    write_report(zoo.out, reports);

    RunManifest m;
    m.flags = {{"param", param}, {"values", values}};
    zoo.to_json(m.flags);
    flags.to_json(m.flags);
    m.flags.erase("attack");
    m.seed = flags.seed;
    m.outputs = {zoo.out};
    m.results = report_results(reports);
    return m;
  }
};

struct HeatmapCmd {
  std::string model, image, dataset, out;
  std::size_t index = 0;
  int class_index = -1;
  std::size_t layer = 0;
  CLI::Option* layer_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("heatmap", "Grad-CAM heatmap (.pgm) or overlay (.ppm)");
    c->add_option("--model", model, "Checkpoint")->required();
    auto* img = c->add_option("--image", image, "PGM/PPM image or TNSR tensor");
    auto* ds = c->add_option("--dataset", dataset, "Dataset to take --index from");
    img->excludes(ds);
    c->add_option("--index", index, "Image index into --dataset or a TNSR batch")->capture_default_str();
    c->add_option("--class", class_index, "Class to explain (default: predicted)");
    layer_opt = c->add_option("--layer", layer, "Conv layer index (default: last conv)");
    c->add_option("--out", out, "Output .pgm (heatmap) or .ppm (overlay)")->required();
  }

  Tensor load_image(std::size_t channels) const {
    if (!dataset.empty()) {
      const Dataset d = load_dataset(dataset);
      if (index >= d.size()) throw std::runtime_error("--index " + std::to_string(index) + " out of range");
      return d.images.slice(index);
    }
    if (image.empty()) throw UsageError("heatmap needs --image or --dataset");
    const auto ext = fs::path(image).extension().string();
    Tensor t = (ext == ".pgm" || ext == ".ppm") ? read_netpbm(image) : read_tensor(image);
    if (t.rank() == 4) {
      if (index >= t.dim(0)) throw std::runtime_error("--index " + std::to_string(index) + " out of range");
      t = t.slice(index);
    }
    if (t.rank() != 3 || t.dim(0) != channels) {
      throw std::runtime_error("image shape " + to_string(t.shape()) + " does not match the model input");
    }
    return t;
  }

  RunManifest run(std::ostream& os) const {
    const Model net = read_checkpoint(model).model;
    const Tensor x = load_image(net.spec().input[0]);
    const int cls =
        class_index >= 0 ? class_index : predict(net, x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)})).front();
    const Heatmap map =
        layer_opt->count() ? grad_cam(net, x, cls, layer) : grad_cam(net, x, cls);
    if (fs::path(out).extension() == ".ppm") {
      export_heatmap_overlay(map, x, out);
    } else {
      export_heatmap(map, out);
    }
    const auto peak = std::max_element(map.values.values().begin(), map.values.values().end());
    const auto at = static_cast<std::size_t>(peak - map.values.values().begin());
    os << "grad-cam class " << cls << ", layer " << map.layer << ", peak at (" << at / map.values.dim(1) << ", "
       << at % map.values.dim(1) << ")\n";

    RunManifest m;
    m.flags = {{"model", model}};
    if (!image.empty()) m.flags["image"] = image;
    if (!dataset.empty()) m.flags["dataset"] = dataset;
    m.flags["index"] = index;
    if (class_index >= 0) m.flags["class"] = class_index;
    if (layer_opt->count()) m.flags["layer"] = layer;
    m.flags["out"] = out;
    m.outputs = {out};
    m.results = {{"class", cls}, {"layer", map.layer}};
    return m;
  }
};

struct SelfcheckCmd {
  std::uint64_t seed = 0;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("selfcheck", "Adjoint, finite-difference, identity and aggregation checks");
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--out", out, "Optional JSON report; a manifest is written next to it");
  }

  int run(std::ostream& os) const {
    const auto groups = run_selfcheck(seed);
    bool ok = true;
    Json report = Json::array();
    for (const auto& g : groups) {
      ok = ok && g.passed();
      os << (g.passed() ? "[PASS] " : "[FAIL] ") << std::left << std::setw(18) << g.name << std::right << g.checks
         << " checks, worst " << std::setprecision(3) << g.worst;
      if (!g.passed()) os << "  first failure: " << g.first_failure;
      os << "\n";
      report.push_back({{"group", g.name}, {"passed", g.passed()}, {"checks", g.checks}, {"worst", g.worst}});
    }
    if (!out.empty()) {
      std::ofstream(out) << report.dump(2) << "\n";
      RunManifest m;
      m.subcommand = "selfcheck";
      m.flags = {{"seed", seed}, {"out", out}};
      m.seed = seed;
      m.version = version();
      m.outputs = {out};
      m.results = {{"passed", ok}};
      write_manifest(m, out);
    }
    return ok ? kOk : kCheckFailed;
  }
};

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Component-wise transformation attacks: train, attack, evaluate, explain"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);
  app.fallthrough(false);

  TrainCmd train_cmd;
  AttackCmd attack_cmd;
  VerifyCmd verify_cmd;
  EvalCmd eval_cmd;
  SweepCmd sweep_cmd;
  HeatmapCmd heatmap_cmd;
  SelfcheckCmd selfcheck_cmd;
  std::string replay_path;
  train_cmd.add(app);
  attack_cmd.add(app);
  verify_cmd.add(app);
  eval_cmd.add(app);
  sweep_cmd.add(app);
  heatmap_cmd.add(app);
  selfcheck_cmd.add(app);
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_path, "Manifest JSON")->required();
  for (auto* sub : app.get_subcommands({})) {
    if (sub != replay) sub->add_option("--config", "key=value file; command-line flags win");
  }

  try {
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    err << "cwt: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "cwt: " << e.what() << "\n";
    return kRuntime;
  }

  try {
    auto finish = [&](RunManifest m, const std::string& name, const std::string& path) {
      m.subcommand = name;
      m.version = version();
      write_manifest(m, path);
      return kOk;
    };
    if (app.got_subcommand("train")) return finish(train_cmd.run(out), "train", train_cmd.out);
    if (app.got_subcommand("attack")) return finish(attack_cmd.run(out), "attack", attack_cmd.out);
    if (app.got_subcommand("eval")) return finish(eval_cmd.run(out), "eval", eval_cmd.zoo.out);
    if (app.got_subcommand("sweep")) return finish(sweep_cmd.run(out), "sweep", sweep_cmd.zoo.out);
    if (app.got_subcommand("heatmap")) return finish(heatmap_cmd.run(out), "heatmap", heatmap_cmd.out);
    if (app.got_subcommand("verify")) return verify_cmd.run(out);
    if (app.got_subcommand("selfcheck")) return selfcheck_cmd.run(out);
    if (app.got_subcommand("replay")) {
      std::ifstream f(replay_path);
      if (!f) throw std::runtime_error("cannot read manifest " + replay_path);
      const RunManifest m = RunManifest::from_json(Json::parse(f));
      if (m.subcommand == "replay") throw UsageError("a replay manifest cannot be replayed");
      if (m.version != version()) {
        err << "cwt: warning: manifest written by version " << m.version << ", this is " << version() << "\n";
      }
      return run(m.replay_args(), out, err);
    }
  } catch (const UsageError& e) {
    err << "cwt: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "cwt: error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace cwt::cli
