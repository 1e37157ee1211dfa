#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "eeqt/config.hpp"

namespace eeqt {

/// Exit codes shared by the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitAcceptance = 1;
inline constexpr int kExitUsage = 2;

struct RunOptions {
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 42;
  int workers = 1;
  /// Human-readable progress and report; null for silence.
  std::ostream* log = nullptr;
};

// Each workflow parses its config (ConfigError on bad input), writes its data
// files and manifest.json into out_dir, and returns kExitOk or
// kExitAcceptance. Data files depend only on (config, seed).

/// PDP ensemble versus master equation on the toy model.
int run_validate_workflow(const Json& config, const RunOptions& opt);
/// Tracks, effective-equation check and Born-limit histogram, per config section.
int run_cloud_workflow(const Json& config, const RunOptions& opt);
/// Barrier-width or barrier-height scan with comparison clocks.
int run_tunnel_workflow(const Json& config, const RunOptions& opt);
/// Chaos-game cloud, box-counting dimensions and Markov-operator iterates.
int run_fractal_workflow(const Json& config, const RunOptions& opt);

}  // namespace eeqt
