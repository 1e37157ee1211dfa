#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeqt/cloud_chamber.hpp"
#include "eeqt/tunneling.hpp"
#include "eeqt/validation.hpp"

namespace eeqt {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::json;

/// Parse a file; throws ConfigError on I/O or syntax errors.
Json load_json(const std::string& path);

// Loaders start from the library defaults and override the keys present.
// Unknown keys and wrong types raise ConfigError. Physical keys carry unit
// suffixes (_ev, _angstrom, _fs, _per_fs).

ToyConfig toy_config_from_json(const Json& j);

struct CloudConfig {
  std::optional<TrackConfig> tracks;
  std::optional<GrwCheckConfig> grw;
  std::optional<BornConfig> born;
};
CloudConfig cloud_config_from_json(const Json& j);

struct TunnelScanConfig {
  TunnelSetup setup;
  ScanParameter parameter = ScanParameter::Width;
  std::vector<double> values;
  int trajectories = 10000;
  double d2_offset_angstrom = 5.0;
  /// Optional acceptance check on the scan: "none", "width_trend" or "height_peak".
  std::string check = "none";
  /// Write one JSON line per trajectory (kind, t0, t_end).
  bool event_log = true;
};
TunnelScanConfig tunnel_config_from_json(const Json& j);

struct FractalConfig {
  double a_fuzz = 0.7;
  std::int64_t points = 100000;
  int burn_in = 100;
  /// Box-counting runs for each of these a values (empty: skip).
  std::vector<double> dimension_a;
  std::int64_t dimension_points = 1000000;
  double scale_min_rad = 0.03;
  double scale_max_rad = 0.5;
  int scale_count = 9;
  /// Markov-operator iteration from the uniform measure (0 iterations: skip).
  int markov_nside = 64;
  int markov_iterations = 0;
  int markov_samples_per_cell = 16;
  int hemisphere_size = 256;
  /// Required properties, checked when dimension_a has several entries.
  bool require_decreasing = false;
};
FractalConfig fractal_config_from_json(const Json& j);

/// The defaults as JSON (used for config snapshots and docs).
Json to_json(const ToyConfig& c);
Json to_json(const CloudConfig& c);
Json to_json(const TunnelScanConfig& c);
Json to_json(const FractalConfig& c);

}  // namespace eeqt
