#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace cwt::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kCheckFailed = 3 };

/// Written next to every output as `<out>.manifest.json`. `flags` holds every
/// resolved option under its long flag name, so `cwt replay` can rebuild the
/// exact command line.
struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::string version;
  std::vector<std::string> outputs;
  nlohmann::ordered_json results = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);

  /// argv (without the program name) that reproduces this run.
  std::vector<std::string> replay_args() const;
};

std::string version();

/// Expands `--config FILE` (key=value lines, '#' comments) into flags placed
/// right after the subcommand. Flags given on the command line win.
std::vector<std::string> expand_config(std::vector<std::string> args);

/// Entry point behind `main`; `args` excludes the program name.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace cwt::cli
