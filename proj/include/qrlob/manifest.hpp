#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace qrlob {

/// Provenance record written next to every command's outputs: rerunning with
/// the same inputs, config and seed reproduces the data files byte for byte.
struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::map<std::string, std::string> input_hashes;  // path -> content hash
  uint64_t seed = 0;
  std::string toolkit_version;
  std::string created_utc;

  std::string dump() const;
  static RunManifest parse(const std::string& json_text);
};

/// Builds the manifest for one run; hashes every input file's bytes.
RunManifest make_manifest(const std::string& subcommand, const std::string& config_text,
                          const std::map<std::string, std::string>& input_paths, uint64_t seed);

/// Writes <out_dir>/manifest.json atomically, creating the directory.
void write_manifest(const RunManifest& m, const std::string& out_dir);

}  // namespace qrlob
