#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qrlob/estimate.hpp"
#include "qrlob/law.hpp"

namespace qrlob {

struct L2Level {
  int64_t price_half_ticks = 0;
  int64_t volume = 0;  // shares
};

struct L2Snapshot {
  int64_t ts_ns = 0;
  std::vector<L2Level> bids;  // best first
  std::vector<L2Level> asks;
  int64_t trade_vol = 0;      // shares traded since the previous row, 0 if none
};

/// Reference price on the half-tick grid. Odd spreads take the midpoint; even
/// spreads take the half-tick candidate closest to the previous value, or the
/// lower one when there is no previous value.
int64_t estimate_pref_half(int64_t bid_half, int64_t ask_half,
                           std::optional<int64_t> previous_pref_half);  // throws CrossedBook

struct SessionWindow {
  int start_minute = -1;  // minutes since UTC midnight, -1 disables the filter
  int end_minute = -1;
};

SessionWindow parse_session(const std::string& text);  // "HH:MM-HH:MM"

struct IngestOptions {
  int K = 3;
  double tick_value = 0.01;
  double law_period_s = 30.0;
  SessionWindow session;
  bool has_trades = false;  // input carries trade_px,trade_vol columns
};

struct IngestQc {
  int64_t n_snapshots = 0;
  int64_t n_dropped_session = 0;
  int64_t n_epochs = 1;
  int64_t n_skipped_diffs = 0;     // diffs spanning a reference-price change
  int64_t n_multi_queue_diffs = 0;
  int64_t n_unclassified = 0;      // volume changes with no usable event reading
  int64_t n_events_per_queue = 0;
  int64_t n_events_pair12 = 0;
  int64_t n_events_pair_m11 = 0;
  std::vector<double> aes;
};

struct IngestLaws {
  std::vector<StationaryLaw> marginal;  // by distance, sides pooled
  StationaryLaw joint12;
  StationaryLaw joint_m11;
  int64_t n_samples = 0;
};

struct PrefSample {
  int64_t ts_ns = 0;
  int64_t pref_half_ticks = 0;
};

struct IngestResult {
  std::vector<EventRecord> per_queue;
  std::vector<EventRecord> pair12;
  std::vector<EventRecord> pair_m11;
  std::vector<double> aes;            // shares, by distance
  IngestLaws laws;
  std::vector<PrefSample> pref_path;
  IngestQc qc;
};

/// Average absolute volume change per queue distance, in shares, over
/// within-epoch snapshot diffs. Throws InsufficientData for a distance with
/// no observed change.
std::vector<double> compute_aes(const std::vector<L2Snapshot>& snapshots,
                                const IngestOptions& opt);

/// Diffs consecutive snapshots into per-queue events with scope-specific
/// waiting times and conditioning sizes. Reductions at the best quote are
/// market orders (gated on the row's traded volume when the input carries
/// trade columns), other reductions are cancellations, increases are
/// insertions. Restarts timers whenever the reference price moves.
IngestResult reconstruct_events(const std::vector<L2Snapshot>& snapshots,
                                const std::vector<double>& aes, const IngestOptions& opt);

/// Queue-size histograms sampled on a fixed time grid.
IngestLaws sample_empirical_law(const std::vector<L2Snapshot>& snapshots,
                                const std::vector<double>& aes, const IngestOptions& opt);

/// L2 CSV: header ts_ns,bp1..bpK,bv1..bvK,ap1..apK,av1..avK[,trade_px,trade_vol].
std::vector<L2Snapshot> parse_l2_csv(const std::string& text, const IngestOptions& opt,
                                     bool* has_trades = nullptr);

/// Full pipeline: session filter, reference-price chain, AES, event
/// reconstruction and sampled laws.
IngestResult ingest_stream(std::vector<L2Snapshot> snapshots, const IngestOptions& opt);

std::string dump_ingest_qc_json(const IngestQc& qc);

}  // namespace qrlob
