#pragma once

#include <stdexcept>
#include <string>

namespace qrlob {

// Base class for every toolkit error.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct CrossedBook : Error { using Error::Error; };        // bid at or above ask in a snapshot
struct InsufficientData : Error { using Error::Error; };   // too few events for a statistic
struct UnknownRegime : Error { using Error::Error; };      // table lacks a conditioning column
struct NoData : Error { using Error::Error; };             // empty cell with no fill rule
struct DegenerateLaw : Error { using Error::Error; };      // size quantiles collapse
struct NonErgodic : Error { using Error::Error; };         // invariant-law series diverges
struct AssumptionViolated : Error { using Error::Error; }; // arrival rate >= departure rate
struct NoConvergence : Error { using Error::Error; };      // solver hit its iteration cap
struct Unstable : Error { using Error::Error; };           // rate matrix spectral radius >= 1
struct Absorbing : Error { using Error::Error; };          // no admissible transition left
struct BadInitial : Error { using Error::Error; };         // invalid initial book for an engine
struct NoTrades : Error { using Error::Error; };           // price-average window is empty
struct InputError : Error { using Error::Error; };         // malformed file or config

}  // namespace qrlob
