// Run manifests: provenance records written next to every CLI output set.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbid/common.hpp"

namespace vbid {

struct InputDigest {
  std::string path;
  std::uint64_t digest = 0;  // FNV-1a of the file bytes
};

struct RunManifest {
  std::string command;       // subcommand plus arguments as invoked
  std::uint64_t config_hash = 0;  // FNV-1a of Config::canonical_text
  std::uint64_t seed = 0;
  std::vector<InputDigest> inputs;
  std::string tool_version;
  double wall_time_s = 0.0;
};

std::uint64_t digest_file(const std::string& path);  // throws DataError

// Atomic write (temp file + rename) of a flat text manifest.
void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

// Re-digests every recorded input; true iff all match.
bool verify_manifest(const RunManifest& m);

extern const char* kToolVersion;

}  // namespace vbid
