#pragma once

// Per-run manifest: what ran, with which configuration, on which inputs, producing which
// outputs. Enough to re-run a command and check its outputs byte for byte.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ffnet {

struct FileRecord {
  std::string role;  // e.g. "data", "checkpoint", "dataset"
  std::string path;  // file name relative to the out directory, or the path as given
  std::string sha256;
  std::uintmax_t bytes = 0;
  friend bool operator==(const FileRecord&, const FileRecord&) = default;
};

struct RunManifest {
  std::string command;
  /// Canonical serialised configuration the command actually used.
  std::string config_snapshot;
  std::uint64_t seed = 0;
  /// Non-config options (paths, flags) needed to repeat the run.
  std::map<std::string, std::string> options;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  std::string started_utc;
  double wall_seconds = 0.0;
  std::string tool_version;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
};

std::string sha256_hex(std::string_view bytes);
/// Throws ValidationError if the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);
FileRecord describe_file(std::string role, const std::filesystem::path& path,
                         const std::string& recorded_path);

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace ffnet
