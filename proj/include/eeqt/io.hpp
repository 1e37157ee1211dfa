#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eeqt/config.hpp"

namespace eeqt {

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

/// Write via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_double(double v);

/// CSV with a header row; cells are preformatted strings.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Line-delimited JSON, one object per line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);
  void write(const Json& record);
  void close();

 private:
  std::ofstream out_;
};

/// Output directory plus the run manifest. Files are registered relative to
/// the directory; finish() hashes them and writes manifest.json atomically.
class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, std::string command, Json config, std::uint64_t seed, int workers);

  /// Absolute path for a file name inside the output directory; rejects names
  /// that escape it.
  std::filesystem::path file(const std::string& name);

  /// Record a result entry in the manifest.
  void set_result(Json result) { result_ = std::move(result); }

  /// Returns the manifest path.
  std::filesystem::path finish(int exit_code);

 private:
  std::filesystem::path dir_;
  std::string command_;
  Json config_;
  std::uint64_t seed_;
  int workers_;
  std::string started_;
  std::vector<std::string> files_;
  Json result_ = Json::object();
};

/// Current UTC time in ISO 8601.
std::string utc_now();

}  // namespace eeqt
