#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "qrlob/core.hpp"
#include "qrlob/law.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

struct SimEvent {
  double t;
  QueueIndex queue;
  EventType type;
};

struct PrefPoint {
  double t;
  int64_t pref_half_ticks;
};

struct MidPoint {
  double t;
  double mid;
};

struct SimPath {
  uint64_t seed = 0;
  uint64_t stream = 0;
  double horizon_s = 0;
  LobState initial;
  LobState terminal;
  int64_t n_events = 0;
  std::vector<SimEvent> events;     // only when recording is on
  std::vector<PrefPoint> pref_path; // starts at t = 0, then one point per move
  std::vector<MidPoint> mid_path;   // piecewise-constant midprice, when recorded
};

struct SimRecording {
  bool events = false;
  bool mid = true;
};

/// Called after each applied event with the pre-event state.
using EventSink =
    std::function<void(double t, double dwell, const LobState& before, QueueIndex queue, EventType type)>;

struct Step {
  double dwell;
  QueueIndex queue;
  EventType type;
};

/// One jump of the embedded chain; applies the sampled event to `state`.
/// Throws Absorbing when no event has positive rate.
Step step(LobState& state, const IntensityModel& model, Rng& rng);

/// Intra-period dynamics: the reference price stays frozen for the whole run.
/// Stops at the horizon, at `max_events` if nonnegative, or when the chain has
/// no outgoing rate.
SimPath simulate_period(const LobState& initial, const IntensityModel& model, double horizon_s,
                        Rng& rng, const SimRecording& rec = {}, const EventSink& sink = {},
                        int64_t max_events = -1);

struct QueueReactiveParams {
  double theta = 0.0;
  double theta_reinit = 0.0;
  std::vector<StationaryLaw> invariant_laws;  // by distance 1..K, sides pooled
  std::vector<double> aes;                    // shares per unit, by distance 1..K

  void validate(int K) const;  // throws InputError
};

/// Full model: intra-period dynamics plus one-tick reference-price moves.
/// An event that moves the midprice while the crossing queue (first ask for an
/// up-move, first bid for a down-move) is empty moves the reference price with
/// probability theta; the queues are then relabeled one tick over with
/// event-size renormalization, the far queue on the advancing side is redrawn
/// from its invariant law, and with probability theta_reinit the whole book is
/// redrawn around the new reference price.
SimPath simulate_queue_reactive(const LobState& initial, const IntensityModel& model,
                                const QueueReactiveParams& params, double horizon_s, Rng& rng,
                                const SimRecording& rec = {}, const EventSink& sink = {});

struct PathStats {
  double vol = std::numeric_limits<double>::quiet_NaN();       // per-bin midprice log-return std
  double vol_pref = std::numeric_limits<double>::quiet_NaN();  // same, on the reference price
  double eta = std::numeric_limits<double>::quiet_NaN();       // continuations / (2 * alternations)
  int64_t n_pref_changes = 0;
  int64_t n_events = 0;
};

/// Per-path summary. eta is NaN with fewer than two reference-price moves and
/// +inf when the move signs never alternate; vol is NaN when the midprice was
/// not recorded.
PathStats path_stats(const SimPath& path, double bin_s, double tick_value);

std::vector<DiscreteSampler> make_samplers(const std::vector<StationaryLaw>& laws);

/// Independent per-queue draw of a full book from the per-distance laws.
LobState draw_from_laws(int K, const std::vector<DiscreteSampler>& samplers,
                        int64_t pref_half_ticks, Rng& rng);

/// Relabel the book one tick over. dir +1 moves the reference price up: queues
/// on the advancing side step one distance closer, the freed first queue takes
/// the crossed queue's (empty) size, the far queue on the advancing side is
/// redrawn from its law, and every relocated size is re-expressed in the
/// destination queue's event size, rounding half away from zero.
void shift_book(LobState& st, int dir, const QueueReactiveParams& params,
                const std::vector<DiscreteSampler>& samplers, Rng& rng);

/// Runs `body(i)` for i in [0, n) on `jobs` worker threads. Results must be
/// written to per-index slots; the call joins all workers before returning.
void parallel_for(int64_t n, int jobs, const std::function<void(int64_t)>& body);

}  // namespace qrlob
