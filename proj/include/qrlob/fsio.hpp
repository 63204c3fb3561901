#pragma once

#include <string>

namespace qrlob {

std::string read_file(const std::string& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// 64-bit FNV-1a fingerprint of a byte string, as "fnv1a:<hex>". Used to tag
/// inputs in run manifests; not a cryptographic hash.
std::string fingerprint(std::string_view bytes);
std::string fingerprint_file(const std::string& path);

}  // namespace qrlob
