#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qrlob::csv {

/// Split one CSV line on commas; fields are trimmed of surrounding spaces.
std::vector<std::string> split(std::string_view line);

/// Split text into non-empty lines (tolerates trailing newline and CR).
std::vector<std::string> lines(std::string_view text);

double to_double(std::string_view field, const std::string& what);
int64_t to_i64(std::string_view field, const std::string& what);

/// Shortest round-trip formatting; NaN prints as "nan", infinities as
/// "inf"/"-inf". Deterministic across runs.
std::string fmt(double v);
std::string fmt(int64_t v);

}  // namespace qrlob::csv
