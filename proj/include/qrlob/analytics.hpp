#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrlob/core.hpp"
#include "qrlob/simulate.hpp"

namespace qrlob {

struct ProbEstimate {
  double p = 0;
  double stderr_ = 0;
  int64_t n_paths = 0;
};

/// Chance that a bid order of n0 units appended behind the standing first bid
/// queue fills completely before the first ask queue empties. Ambient
/// cancellations never remove the tracked order: the cancellation intensity
/// is thinned to the ambient fraction and its target drawn uniformly among
/// ambient units; market orders consume the queue front first.
ProbEstimate execution_probability(const IntensityModel& model, const LobState& initial, int n0,
                                   int64_t n_paths, uint64_t seed, int jobs = 1);

enum class TacticKind : uint8_t { T1 = 0, T2 = 1 };
enum class ScheduleKind : uint8_t { S1 = 0, S2 = 1 };
enum class BenchmarkKind : uint8_t { Vwap = 0, ArrivalPrice = 1 };

struct Schedule {
  ScheduleKind kind = ScheduleKind::S1;
  int64_t n_total = 0;  // first-queue event-size units
  int n_slices = 1;

  /// Per-slice quantities, largest-remainder rounding, sums to n_total.
  std::vector<int64_t> quantities() const;
};

struct Tactic {
  TacticKind kind = TacticKind::T1;
  double slice_s = 600.0;
};

struct ExecutionReport {
  double p_exec = 0;          // volume weighted fill price, 0 when nothing traded
  double p_bench = 0;
  double slippage = 0;        // (bench - exec) / bench
  double slippage_theo = 0;   // slice-VWAP schedule benchmark variant
  double passive_rate = 0;    // passively filled fraction of n_total
  int64_t filled_shares = 0;
  int64_t passive_shares = 0;
  int64_t n_pref_changes = 0;
  int64_t n_events = 0;
};

struct Fill {
  double t = 0;
  double price = 0;
  int64_t shares = 0;
  bool passive = false;
};

struct TcaConfig {
  Schedule schedule;
  Tactic tactic;
  BenchmarkKind benchmark = BenchmarkKind::ArrivalPrice;
  double horizon_s = 0;       // 0: slices cover it exactly
  bool record_fills = false;
};

struct TcaResult {
  std::vector<ExecutionReport> reports;        // one per path
  std::vector<std::vector<Fill>> fills;        // per path, when recorded
};

TcaResult run_tactic(const IntensityModel& model, const QueueReactiveParams& params,
                     const TcaConfig& cfg, int64_t n_paths, uint64_t seed, int jobs = 1);

struct Trade {
  double t = 0;
  double price = 0;
  int64_t shares = 0;
};

/// Volume weighted average price over [t0, t1]. Throws NoTrades when the
/// window is empty.
double vwap(const std::vector<Trade>& trades, double t0, double t1);

struct ImpactCell {
  double t_s = 0;
  int64_t n_units = 0;
  double mi = 0;
  double mi_se = 0;
};

struct ImpactConfig {
  Tactic tactic;
  std::vector<int64_t> n_values;  // order sizes, first-queue units
  std::vector<double> t_grid;     // seconds inside the slice
  int64_t n_paths = 2000;
};

/// Mean relative midprice displacement for a single-slice execution of n
/// units, matched path seeds across sizes; n = 0 rows are exactly zero.
std::vector<ImpactCell> market_impact(const IntensityModel& model,
                                      const QueueReactiveParams& params, const ImpactConfig& cfg,
                                      uint64_t seed, int jobs = 1);

std::string dump_reports_csv(const TcaResult& result);
std::string dump_impact_csv(const std::vector<ImpactCell>& cells);

}  // namespace qrlob
