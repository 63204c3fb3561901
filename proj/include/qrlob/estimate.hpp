#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrlob/core.hpp"
#include "qrlob/law.hpp"

namespace qrlob {

/// Conditioning recorded with each event. PerQueue events carry the event
/// queue's own size; Pair12 events carry the same-side (first, second) queue
/// sizes; PairM11 events carry (first bid, first ask) in that fixed order.
enum class Scope : uint8_t { PerQueue = 0, Pair12 = 1, PairM11 = 2 };

const char* scope_code(Scope s);
Scope scope_from_code(std::string_view code);

struct EventRecord {
  int32_t pref_epoch = 0;
  double dt = 0;        // seconds since the previous event in this scope
  QueueIndex queue{1};
  EventType etype = EventType::LimitInsert;
  int32_t qb1 = 0;      // conditioning sizes before the event
  int32_t qb2 = -1;     // -1 when the scope has a single component
};

struct CellEstimate {
  int distance = 0;
  int regime = 0;
  int size = 0;
  EventType etype = EventType::LimitInsert;
  double rate = 0;
  double ci_low = 0;
  double ci_high = 0;
  int64_t n_obs = 0;    // events observed in the conditioning cell, all types
  bool filled = false;  // rate inherited from the nearest populated size
};

struct RegimeThresholds {
  int m = 0;
  int l = 0;
};

struct EstimateOptions {
  int c_max = 30;
  int n_obs_floor = 10;    // below this a cell inherits its nearest neighbor
  int K = 0;               // 0: inferred from the largest distance seen
  double tick_value = 0.01;
  std::vector<double> aes; // copied into the model; defaults to 1s
};

struct EstimationQc {
  int64_t n_events = 0;
  int64_t n_rejected = 0;  // events impossible under the target model
  int64_t n_filled_cells = 0;
  std::vector<std::string> empty_regimes;
};

struct EstimationResult {
  IntensityModel model;
  std::vector<CellEstimate> cells;
  EstimationQc qc;
};

/// Per-queue maximum likelihood rates: total intensity per cell is
/// events / exposure, split by the empirical type frequencies.
EstimationResult estimate_model_I(const std::vector<EventRecord>& per_queue,
                                  const EstimateOptions& opt);

/// Second-queue rates switch on whether the first queue is occupied; market
/// orders reach the second queue only when the first is empty. Distances
/// beyond 2 are filled from `per_queue_tail` when given.
EstimationResult estimate_model_IIa(const std::vector<EventRecord>& pair12,
                                    const EstimateOptions& opt,
                                    const std::vector<EventRecord>& per_queue_tail = {});

/// First-queue sizes bucketed by the opposite first queue: thresholds are the
/// 1/3 and 2/3 quantiles of the positive part of its law.
RegimeThresholds compute_thresholds(const StationaryLaw& first_queue_law);

EstimationResult estimate_model_IIb(const std::vector<EventRecord>& pair_m11,
                                    const std::vector<EventRecord>& pair12,
                                    const RegimeThresholds& thresholds, const EstimateOptions& opt,
                                    const std::vector<EventRecord>& per_queue_tail = {});

/// Constant insertion and market-order rates, cancellation linear in the
/// queue size.
EstimationResult estimate_poisson_baseline(const std::vector<EventRecord>& per_queue,
                                           const EstimateOptions& opt);

struct RateInterval {
  double low = 0;
  double high = 0;
};

/// 95% interval for the total intensity times 95% interval for the type
/// proportion, multiplied endpoint-wise.
RateInterval confidence_interval(double lambda_hat, double p_hat, int64_t n_obs);

/// Event CSV: pref_epoch,dt_s,queue,etype,qb1,qb2 with a scope header line.
std::string dump_events_csv(const std::vector<EventRecord>& events, Scope scope);
std::vector<EventRecord> parse_events_csv(const std::string& text, Scope* scope_out = nullptr);

/// CI side table: queue,regime,size,etype,rate,ci_low,ci_high,n_obs.
std::string dump_ci_csv(const EstimationResult& result);

}  // namespace qrlob
