#include "qrlob/manifest.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>

#include "json.hpp"
#include "qrlob/core.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/fsio.hpp"

namespace qrlob {

std::string RunManifest::dump() const {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["config_hash"] = config_hash;
  j["input_hashes"] = input_hashes;
  j["seed"] = seed;
  j["toolkit_version"] = toolkit_version;
  j["created_utc"] = created_utc;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  RunManifest m;
  m.subcommand = j.value("subcommand", "");
  m.config_hash = j.value("config_hash", "");
  if (j.contains("input_hashes"))
    m.input_hashes = j["input_hashes"].get<std::map<std::string, std::string>>();
  m.seed = j.value("seed", uint64_t{0});
  m.toolkit_version = j.value("toolkit_version", "");
  m.created_utc = j.value("created_utc", "");
  return m;
}

RunManifest make_manifest(const std::string& subcommand, const std::string& config_text,
                          const std::map<std::string, std::string>& input_paths, uint64_t seed) {
  RunManifest m;
  m.subcommand = subcommand;
  m.config_hash = fingerprint(config_text);
  for (const auto& [label, path] : input_paths) m.input_hashes[label] = fingerprint_file(path);
  m.seed = seed;
  m.toolkit_version = kToolkitVersion;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  m.created_utc = buf;
  return m;
}

void write_manifest(const RunManifest& m, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_file_atomic((std::filesystem::path(out_dir) / "manifest.json").string(), m.dump());
}

}  // namespace qrlob
