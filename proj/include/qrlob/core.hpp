#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qrlob/errors.hpp"

namespace qrlob {

inline constexpr int kMaxDepth = 16;
inline constexpr const char* kToolkitVersion = "0.1.0";

/// Side-and-distance coordinate of one queue: -K..-1 are bids, 1..K are asks.
class QueueIndex {
 public:
  explicit QueueIndex(int value) : v_(value) {
    if (v_ == 0) throw Error("QueueIndex: zero is not a queue");
  }
  int value() const { return v_; }
  int distance() const { return v_ < 0 ? -v_ : v_; }
  bool is_ask() const { return v_ > 0; }
  QueueIndex mirrored() const { return QueueIndex(-v_); }
  friend bool operator==(QueueIndex a, QueueIndex b) { return a.v_ == b.v_; }
  friend bool operator!=(QueueIndex a, QueueIndex b) { return a.v_ != b.v_; }

 private:
  int v_;
};

enum class EventType : uint8_t { LimitInsert = 0, Cancel = 1, MarketOrder = 2 };

const char* event_code(EventType t);
EventType event_from_code(std::string_view code);

/// Book state around the reference price. Queue sizes are in average-event-size
/// units; the queue at distance d sits at p_ref -/+ (d - 0.5) ticks. The
/// reference price itself is kept on the half-tick grid as an integer.
struct LobState {
  int K = 0;
  std::vector<int32_t> q;        // bids -K..-1, then asks 1..K
  int64_t pref_half_ticks = 0;   // currency value = pref_half_ticks * tick / 2

  static LobState empty(int K, int64_t pref_half_ticks = 1);

  int index_of(QueueIndex qi) const {
    return qi.value() < 0 ? qi.value() + K : K + qi.value() - 1;
  }
  int32_t size_at(QueueIndex qi) const { return q[index_of(qi)]; }
  int32_t& size_at(QueueIndex qi) { return q[index_of(qi)]; }

  LobState mirrored() const;     // bid/ask swap
};

std::optional<QueueIndex> best_ask(const LobState& s);
std::optional<QueueIndex> best_bid(const LobState& s);

/// Twice the midprice, in half-ticks. An empty side falls back to the first
/// level beyond the tracked window (distance K + 1) so the midprice stays
/// defined; that convention only matters when a whole side drains.
int64_t mid_sum_half_ticks(const LobState& s);

/// Midprice in currency.
double mid_price(const LobState& s, double tick_value);

enum class ModelKind : uint8_t { ModelI = 0, ModelIIa = 1, ModelIIb = 2, PoissonBaseline = 3 };

const char* model_kind_code(ModelKind k);
ModelKind model_kind_from_code(std::string_view code);

/// Conditioning buckets for the opposite first queue (ModelIIb): empty,
/// small, usual, large, split by the thresholds (m, l).
enum : int { kOppEmpty = 0, kOppSmall = 1, kOppUsual = 2, kOppLarge = 3 };

/// Per-size event intensity tables for one instrument, keyed by queue
/// distance, conditioning regime and event type. Sizes above `cap` reuse the
/// rates at `cap`.
class IntensityModel {
 public:
  ModelKind kind = ModelKind::ModelI;
  int K = 0;
  double tick_value = 0.01;
  std::vector<double> aes;       // shares per queue event, by distance
  int cap = 30;
  int m = 0;                     // ModelIIb only: opposite-size thresholds
  int l = 0;

  // tables[d-1][regime][type][size], sizes 0..cap
  std::vector<std::vector<std::array<std::vector<double>, 3>>> tables;

  int regime_count(int distance) const;
  static const std::vector<std::string>& regime_keys(ModelKind kind, int distance);

  double rate(int distance, int regime, EventType t, int size) const {
    const auto& col = tables[distance - 1];
    if (regime < 0 || regime >= static_cast<int>(col.size()))
      throw UnknownRegime("intensity lookup: no regime column " + std::to_string(regime) +
                          " at distance " + std::to_string(distance));
    const auto& v = col[regime][static_cast<int>(t)];
    const int n = size < 0 ? 0 : (size > cap ? cap : size);
    return v[n];
  }

  /// Bucket of an opposite-side first-queue size under the (m, l) thresholds.
  int opp_range(int opposite_size) const {
    if (opposite_size <= 0) return kOppEmpty;
    if (opposite_size <= m) return kOppSmall;
    if (opposite_size <= l) return kOppUsual;
    return kOppLarge;
  }

  void validate() const;         // throws InputError / UnknownRegime

  static IntensityModel load(const std::string& path);
  void save(const std::string& path) const;
};

IntensityModel parse_model(std::string_view json_text);
std::string dump_model(const IntensityModel& model);

/// One admissible jump of the queue system: `direction` is +1 for an
/// insertion and -1 for a departure of one unit at `queue`.
struct Transition {
  QueueIndex queue;
  int direction;
  double rate;
};

/// Finer-grained view of the same row, one entry per event type.
struct Flow {
  QueueIndex queue;
  EventType type;
  double rate;
};

/// Enumerate all positive-rate events out of `s`. Clears and fills `out`.
void flow_row(const LobState& s, const IntensityModel& model, std::vector<Flow>& out);

/// Off-diagonal generator row at `s`: insertions and net departures per
/// queue. The implied diagonal is minus the sum of the rates.
std::vector<Transition> generator_row(const LobState& s, const IntensityModel& model);

/// Numerical check of the stability conditions: beyond `c_bound` every queue
/// must drift down (delta > 0), and total insertion intensity must stay
/// bounded (h). Checks every tabulated conditioning cell.
struct ErgodicityReport {
  bool ok = false;
  double delta = 0.0;            // min over cells of departure - arrival rate
  double h = 0.0;                // bound on the summed insertion rates
  int c_bound = 0;
  std::string worst_cell;        // distance/regime/size attaining delta
};

ErgodicityReport check_ergodicity_assumptions(const IntensityModel& model, int c_bound);

/// Smallest c_bound that passes the check, if any.
std::optional<int> smallest_stable_bound(const IntensityModel& model);

}  // namespace qrlob
