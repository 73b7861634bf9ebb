#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace ptlab {

// Reproducibility record written atomically at the end of every CLI run.
// A run is reproducible from its manifest alone: subcommand + resolved
// config + seed + input digests.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;   // fully resolved key -> value
  std::map<std::string, std::string> inputs;   // path -> fnv1a64 digest
  std::map<std::string, std::string> artifacts;  // name -> path
  std::string code_version;
  uint64_t seed = 0;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;

  void save(const std::filesystem::path& path) const;  // tmp file + rename
  static RunManifest load(const std::filesystem::path& path);
};

std::string iso8601_utc_now();

}  // namespace ptlab
