#include "qrlob/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "json.hpp"
#include "qrlob/csv.hpp"

namespace qrlob {

namespace {

constexpr int64_t kNsPerSec = 1000000000;
constexpr double kSameInstantDt = 1e-9;

int64_t day_of(int64_t ts_ns) { return ts_ns / (86400 * kNsPerSec); }

int minute_of_day(int64_t ts_ns) {
  return static_cast<int>(ts_ns / (60 * kNsPerSec) % (24 * 60));
}

int queue_slot(int value, int K) { return value < 0 ? value + K : K + value - 1; }

/// Shares resting at each tracked distance, aligned on the reference price.
std::vector<int64_t> volumes_by_queue(const L2Snapshot& snap, int64_t pref_half, int K) {
  std::vector<int64_t> vols(2 * K, 0);
  for (const L2Level& lv : snap.bids) {
    const int64_t twice_d = pref_half - lv.price_half_ticks + 1;  // 2 * distance
    if (twice_d < 2 || twice_d % 2 != 0) continue;
    const int d = static_cast<int>(twice_d / 2);
    if (d <= K) vols[queue_slot(-d, K)] += lv.volume;
  }
  for (const L2Level& lv : snap.asks) {
    const int64_t twice_d = lv.price_half_ticks - pref_half + 1;
    if (twice_d < 2 || twice_d % 2 != 0) continue;
    const int d = static_cast<int>(twice_d / 2);
    if (d <= K) vols[queue_slot(d, K)] += lv.volume;
  }
  return vols;
}

int32_t to_units(int64_t shares, double aes) {
  if (shares <= 0) return 0;
  return static_cast<int32_t>(std::ceil(static_cast<double>(shares) / aes));
}

}  // namespace

int64_t estimate_pref_half(int64_t bid_half, int64_t ask_half,
                           std::optional<int64_t> previous_pref_half) {
  if (bid_half >= ask_half)
    throw CrossedBook("best bid at or above best ask (" + std::to_string(bid_half) + " vs " +
                      std::to_string(ask_half) + " half-ticks)");
  const int64_t mid = (bid_half + ask_half) / 2;
  const int64_t spread_ticks = (ask_half - bid_half) / 2;
  if (spread_ticks % 2 == 1) return mid;
  if (!previous_pref_half) return mid - 1;
  const int64_t lo = mid - 1, hi = mid + 1;
  return std::llabs(*previous_pref_half - lo) <= std::llabs(*previous_pref_half - hi) ? lo : hi;
}

SessionWindow parse_session(const std::string& text) {
  SessionWindow w;
  if (text.empty()) return w;
  const auto bad = [&] { return InputError("session must look like HH:MM-HH:MM, got " + text); };
  if (text.size() != 11 || text[2] != ':' || text[5] != '-' || text[8] != ':') throw bad();
  auto num = [&](int pos) {
    const char a = text[pos], b = text[pos + 1];
    if (a < '0' || a > '9' || b < '0' || b > '9') throw bad();
    return (a - '0') * 10 + (b - '0');
  };
  const int h1 = num(0), m1 = num(3), h2 = num(6), m2 = num(9);
  if (h1 > 23 || h2 > 24 || m1 > 59 || m2 > 59) throw bad();
  w.start_minute = h1 * 60 + m1;
  w.end_minute = h2 * 60 + m2;
  if (w.start_minute >= w.end_minute) throw InputError("session window is empty: " + text);
  return w;
}

std::vector<L2Snapshot> parse_l2_csv(const std::string& text, const IngestOptions& opt,
                                     bool* has_trades) {
  const auto rows = csv::lines(text);
  if (rows.empty()) throw InputError("no snapshots");
  const auto header = csv::split(rows[0]);
  if (header.empty() || header[0] != "ts_ns")
    throw InputError("l2 csv: header must start with ts_ns");

  int depth = 0;
  while (1 + depth < static_cast<int>(header.size()) &&
         header[1 + depth] == "bp" + std::to_string(depth + 1))
    ++depth;
  if (depth == 0) throw InputError("l2 csv: no bid price columns");
  const int n_core = 1 + 4 * depth;
  if (static_cast<int>(header.size()) < n_core)
    throw InputError("l2 csv: truncated header");
  for (int j = 0; j < depth; ++j) {
    const std::string n = std::to_string(j + 1);
    if (header[1 + depth + j] != "bv" + n || header[1 + 2 * depth + j] != "ap" + n ||
        header[1 + 3 * depth + j] != "av" + n)
      throw InputError("l2 csv: header must list bp*,bv*,ap*,av* in order");
  }
  bool trades = false;
  if (static_cast<int>(header.size()) == n_core + 2) {
    if (header[n_core] != "trade_px" || header[n_core + 1] != "trade_vol")
      throw InputError("l2 csv: trailing columns must be trade_px,trade_vol");
    trades = true;
  } else if (static_cast<int>(header.size()) != n_core) {
    throw InputError("l2 csv: unexpected column count in header");
  }
  if (has_trades) *has_trades = trades;

  const double half_tick = opt.tick_value / 2.0;
  std::vector<L2Snapshot> out;
  out.reserve(rows.size() - 1);
  int64_t prev_ts = INT64_MIN;
  for (size_t i = 1; i < rows.size(); ++i) {
    const std::string row_tag = "row " + std::to_string(i + 1);
    const auto f = csv::split(rows[i]);
    if (static_cast<int>(f.size()) != static_cast<int>(header.size()))
      throw InputError("l2 csv " + row_tag + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(f.size()));
    L2Snapshot snap;
    snap.ts_ns = csv::to_i64(f[0], row_tag + " ts_ns");
    if (snap.ts_ns < prev_ts) throw InputError("l2 csv " + row_tag + ": timestamp decreases");
    prev_ts = snap.ts_ns;

    auto parse_side = [&](int price_base, int vol_base, std::vector<L2Level>& side, bool is_bid) {
      int64_t prev_price = 0;
      bool have_prev = false;
      for (int j = 0; j < depth; ++j) {
        const std::string& ps = f[price_base + j];
        const std::string& vs = f[vol_base + j];
        if (ps.empty() && vs.empty()) continue;
        if (ps.empty() || vs.empty())
          throw InputError("l2 csv " + row_tag + ": level " + std::to_string(j + 1) +
                           " must give both price and volume");
        const double px = csv::to_double(ps, row_tag + " price");
        const double r = px / half_tick;
        const int64_t h = std::llround(r);
        if (std::abs(r - static_cast<double>(h)) > 1e-6)
          throw InputError("l2 csv " + row_tag + ": price " + ps + " is off the half-tick grid");
        if (h % 2 != 0)
          throw InputError("l2 csv " + row_tag + ": price " + ps + " is off the tick grid");
        const int64_t vol = csv::to_i64(vs, row_tag + " volume");
        if (vol < 0) throw InputError("l2 csv " + row_tag + ": negative volume");
        if (vol == 0) continue;
        if (have_prev && (is_bid ? h >= prev_price : h <= prev_price))
          throw InputError("l2 csv " + row_tag + ": level prices must be strictly ordered");
        prev_price = h;
        have_prev = true;
        side.push_back({h, vol});
      }
    };
    parse_side(1, 1 + depth, snap.bids, true);
    parse_side(1 + 2 * depth, 1 + 3 * depth, snap.asks, false);
    if (snap.bids.empty() || snap.asks.empty())
      throw InputError("l2 csv " + row_tag + ": both sides need at least one level");
    if (trades && !f[n_core + 1].empty())
      snap.trade_vol = csv::to_i64(f[n_core + 1], row_tag + " trade_vol");
    out.push_back(std::move(snap));
  }
  if (out.empty()) throw InputError("no snapshots");
  return out;
}

namespace {

struct PrefChain {
  std::vector<int64_t> pref;     // per snapshot
  std::vector<bool> day_break;   // true when snapshot starts a new day
};

PrefChain build_pref_chain(const std::vector<L2Snapshot>& snaps) {
  PrefChain chain;
  chain.pref.reserve(snaps.size());
  chain.day_break.assign(snaps.size(), false);
  std::optional<int64_t> prev;
  for (size_t i = 0; i < snaps.size(); ++i) {
    if (i > 0 && day_of(snaps[i].ts_ns) != day_of(snaps[i - 1].ts_ns)) {
      prev.reset();
      chain.day_break[i] = true;
    }
    const int64_t p =
        estimate_pref_half(snaps[i].bids.front().price_half_ticks,
                           snaps[i].asks.front().price_half_ticks, prev);
    chain.pref.push_back(p);
    prev = p;
  }
  return chain;
}

std::vector<L2Snapshot> apply_session(std::vector<L2Snapshot> snaps, const SessionWindow& w,
                                      int64_t* n_dropped) {
  if (w.start_minute < 0) {
    if (n_dropped) *n_dropped = 0;
    return snaps;
  }
  std::vector<L2Snapshot> kept;
  kept.reserve(snaps.size());
  for (auto& s : snaps) {
    const int m = minute_of_day(s.ts_ns);
    if (m >= w.start_minute && m < w.end_minute)
      kept.push_back(std::move(s));
  }
  if (n_dropped) *n_dropped = static_cast<int64_t>(snaps.size() - kept.size());
  return kept;
}

}  // namespace

std::vector<double> compute_aes(const std::vector<L2Snapshot>& snapshots,
                                const IngestOptions& opt) {
  if (snapshots.size() < 2) throw InsufficientData("need at least two snapshots");
  const PrefChain chain = build_pref_chain(snapshots);
  std::vector<double> sum(opt.K, 0.0);
  std::vector<int64_t> n(opt.K, 0);
  for (size_t i = 1; i < snapshots.size(); ++i) {
    if (chain.day_break[i] || chain.pref[i] != chain.pref[i - 1]) continue;
    const auto before = volumes_by_queue(snapshots[i - 1], chain.pref[i], opt.K);
    const auto after = volumes_by_queue(snapshots[i], chain.pref[i], opt.K);
    for (int slot = 0; slot < 2 * opt.K; ++slot) {
      const int64_t delta = after[slot] - before[slot];
      if (delta == 0) continue;
      const int d = slot < opt.K ? opt.K - slot : slot - opt.K + 1;
      sum[d - 1] += static_cast<double>(std::llabs(delta));
      ++n[d - 1];
    }
  }
  std::vector<double> aes(opt.K);
  for (int d = 1; d <= opt.K; ++d) {
    if (n[d - 1] == 0)
      throw InsufficientData("no events observed at distance " + std::to_string(d));
    aes[d - 1] = sum[d - 1] / static_cast<double>(n[d - 1]);
  }
  return aes;
}

IngestResult reconstruct_events(const std::vector<L2Snapshot>& snapshots,
                                const std::vector<double>& aes, const IngestOptions& opt) {
  if (static_cast<int>(aes.size()) != opt.K)
    throw InputError("reconstruction needs one event size per distance");
  IngestResult res;
  res.aes = aes;
  res.qc.n_snapshots = static_cast<int64_t>(snapshots.size());
  if (snapshots.empty()) throw InputError("no snapshots");

  const PrefChain chain = build_pref_chain(snapshots);
  res.pref_path.reserve(snapshots.size());
  for (size_t i = 0; i < snapshots.size(); ++i)
    res.pref_path.push_back({snapshots[i].ts_ns, chain.pref[i]});

  const int K = opt.K;
  int32_t epoch = 0;
  // Scope timers hold the time exposure started: the epoch start or the
  // previous event in the scope.
  std::vector<double> t_queue(2 * K);
  std::array<double, 2> t_pair12{};  // bid, ask
  double t_pair_m11 = 0;

  auto t_of = [&](size_t i) {
    return static_cast<double>(snapshots[i].ts_ns - snapshots.front().ts_ns) / 1e9;
  };
  auto reset_timers = [&](double t) {
    std::fill(t_queue.begin(), t_queue.end(), t);
    t_pair12 = {t, t};
    t_pair_m11 = t;
  };
  reset_timers(t_of(0));

  for (size_t i = 1; i < snapshots.size(); ++i) {
    const double now = t_of(i);
    if (chain.day_break[i] || chain.pref[i] != chain.pref[i - 1]) {
      ++epoch;
      ++res.qc.n_skipped_diffs;
      reset_timers(now);
      continue;
    }
    const int64_t pref = chain.pref[i];
    const auto before = volumes_by_queue(snapshots[i - 1], pref, K);
    const auto after = volumes_by_queue(snapshots[i], pref, K);

    std::vector<int> changed;
    for (int slot = 0; slot < 2 * K; ++slot)
      if (after[slot] != before[slot]) changed.push_back(slot);
    if (changed.empty()) continue;
    if (changed.size() > 1) ++res.qc.n_multi_queue_diffs;

    std::vector<int64_t> work = before;
    auto units_at = [&](int value) {
      const int d = value < 0 ? -value : value;
      return to_units(work[queue_slot(value, K)], aes[d - 1]);
    };
    auto best_distance = [&](bool ask_side) {
      for (int d = 1; d <= K; ++d) {
        const int v = ask_side ? d : -d;
        if (work[queue_slot(v, K)] > 0) return d;
      }
      return K + 1;
    };

    // Per-diff once-only timers: the first event of a scope gets the waiting
    // time, coincident followers in the same diff get a nominal instant.
    std::array<bool, 2 * kMaxDepth> queue_used{};
    std::array<bool, 2> pair12_used{};
    bool pair_m11_used = false;

    auto emit = [&](int value, EventType type) {
      const int d = value < 0 ? -value : value;
      const QueueIndex qi(value);
      {
        const int slot = queue_slot(value, K);
        double dt = queue_used[slot] ? kSameInstantDt : now - t_queue[slot];
        if (dt <= 0) dt = kSameInstantDt;
        EventRecord e;
        e.pref_epoch = epoch;
        e.dt = dt;
        e.queue = qi;
        e.etype = type;
        e.qb1 = units_at(value);
        res.per_queue.push_back(e);
        queue_used[slot] = true;
        t_queue[slot] = now;
      }
      if (d <= 2) {
        const int side = value < 0 ? 0 : 1;
        const int sgn = value < 0 ? -1 : 1;
        double dt = pair12_used[side] ? kSameInstantDt : now - t_pair12[side];
        if (dt <= 0) dt = kSameInstantDt;
        EventRecord e;
        e.pref_epoch = epoch;
        e.dt = dt;
        e.queue = qi;
        e.etype = type;
        e.qb1 = units_at(sgn);
        e.qb2 = units_at(sgn * 2);
        res.pair12.push_back(e);
        pair12_used[side] = true;
        t_pair12[side] = now;
      }
      if (d == 1) {
        double dt = pair_m11_used ? kSameInstantDt : now - t_pair_m11;
        if (dt <= 0) dt = kSameInstantDt;
        EventRecord e;
        e.pref_epoch = epoch;
        e.dt = dt;
        e.queue = qi;
        e.etype = type;
        e.qb1 = units_at(-1);
        e.qb2 = units_at(1);
        res.pair_m11.push_back(e);
        pair_m11_used = true;
        t_pair_m11 = now;
      }
    };

    // Reductions first, best levels before deeper ones so a sweep reads as
    // sequential market orders; insertions afterward in fixed queue order.
    bool any_market = false;
    for (int side = 0; side < 2; ++side) {
      const bool ask_side = side == 1;
      for (int d = 1; d <= K; ++d) {
        const int value = ask_side ? d : -d;
        const int slot = queue_slot(value, K);
        const int64_t delta = after[slot] - before[slot];
        if (delta >= 0) continue;
        const bool at_best = d == best_distance(ask_side);
        const bool market = at_best && (!opt.has_trades || snapshots[i].trade_vol > 0);
        const EventType type = market ? EventType::MarketOrder : EventType::Cancel;
        any_market = any_market || market;
        emit(value, type);
        work[slot] += delta;
      }
    }
    if (opt.has_trades && snapshots[i].trade_vol > 0 && !any_market) ++res.qc.n_unclassified;
    for (int value = -K; value <= K; ++value) {
      if (value == 0) continue;
      const int slot = queue_slot(value, K);
      const int64_t delta = after[slot] - before[slot];
      if (delta <= 0) continue;
      emit(value, EventType::LimitInsert);
      work[slot] += delta;
    }
  }

  res.qc.n_epochs = epoch + 1;
  res.qc.aes = aes;
  res.qc.n_events_per_queue = static_cast<int64_t>(res.per_queue.size());
  res.qc.n_events_pair12 = static_cast<int64_t>(res.pair12.size());
  res.qc.n_events_pair_m11 = static_cast<int64_t>(res.pair_m11.size());
  return res;
}

IngestLaws sample_empirical_law(const std::vector<L2Snapshot>& snapshots,
                                const std::vector<double>& aes, const IngestOptions& opt) {
  if (opt.law_period_s <= 0) throw InputError("sampling period must be positive");
  if (snapshots.empty()) throw InputError("no snapshots");
  const PrefChain chain = build_pref_chain(snapshots);

  constexpr int kHistCap = 512;
  std::vector<std::vector<double>> marg(opt.K, std::vector<double>(kHistCap + 1, 0.0));
  std::vector<double> j12((kHistCap + 1) * (kHistCap + 1), 0.0);
  std::vector<double> jm11((kHistCap + 1) * (kHistCap + 1), 0.0);

  IngestLaws laws;
  const int64_t period_ns = static_cast<int64_t>(opt.law_period_s * 1e9);
  const int64_t t0 = snapshots.front().ts_ns;
  size_t pos = 0;
  for (int64_t t = t0 + period_ns; t <= snapshots.back().ts_ns; t += period_ns) {
    while (pos + 1 < snapshots.size() && snapshots[pos + 1].ts_ns <= t) ++pos;
    const auto vols = volumes_by_queue(snapshots[pos], chain.pref[pos], opt.K);
    auto units = [&](int value) {
      const int d = value < 0 ? -value : value;
      const int32_t u = to_units(vols[queue_slot(value, opt.K)], aes[d - 1]);
      return std::min<int32_t>(u, kHistCap);
    };
    for (int d = 1; d <= opt.K; ++d) {
      marg[d - 1][units(d)] += 1.0;
      marg[d - 1][units(-d)] += 1.0;
    }
    if (opt.K >= 2) {
      j12[units(1) * (kHistCap + 1) + units(2)] += 1.0;
      j12[units(-1) * (kHistCap + 1) + units(-2)] += 1.0;
    }
    jm11[units(-1) * (kHistCap + 1) + units(1)] += 1.0;
    ++laws.n_samples;
  }
  if (laws.n_samples == 0) throw InsufficientData("no sampling instants inside the data span");

  auto trim1 = [](const std::vector<double>& h) {
    int last = static_cast<int>(h.size()) - 1;
    while (last > 0 && h[last] == 0) --last;
    StationaryLaw law = StationaryLaw::zeros(last + 1);
    for (int s = 0; s <= last; ++s) law.ref(s) = h[s];
    law.normalize();
    law.meta.method = "sampled";
    law.meta.n_trunc = last + 1;
    return law;
  };
  auto trim2 = [](const std::vector<double>& h) {
    int rmax = 0, cmax = 0;
    for (int r = 0; r <= kHistCap; ++r)
      for (int c = 0; c <= kHistCap; ++c)
        if (h[r * (kHistCap + 1) + c] > 0) {
          rmax = std::max(rmax, r);
          cmax = std::max(cmax, c);
        }
    StationaryLaw law = StationaryLaw::zeros(rmax + 1, cmax + 1);
    for (int r = 0; r <= rmax; ++r)
      for (int c = 0; c <= cmax; ++c) law.ref(r, c) = h[r * (kHistCap + 1) + c];
    law.normalize();
    law.meta.method = "sampled";
    law.meta.n_trunc = std::max(rmax, cmax) + 1;
    return law;
  };
  for (int d = 1; d <= opt.K; ++d) laws.marginal.push_back(trim1(marg[d - 1]));
  if (opt.K >= 2) laws.joint12 = trim2(j12);
  laws.joint_m11 = trim2(jm11);
  return laws;
}

IngestResult ingest_stream(std::vector<L2Snapshot> snapshots, const IngestOptions& opt) {
  int64_t dropped = 0;
  snapshots = apply_session(std::move(snapshots), opt.session, &dropped);
  if (snapshots.empty()) throw InputError("no snapshots inside the session window");
  const std::vector<double> aes = compute_aes(snapshots, opt);
  IngestResult res = reconstruct_events(snapshots, aes, opt);
  res.laws = sample_empirical_law(snapshots, aes, opt);
  res.qc.n_dropped_session = dropped;
  return res;
}

std::string dump_ingest_qc_json(const IngestQc& qc) {
  nlohmann::json j;
  j["n_snapshots"] = qc.n_snapshots;
  j["n_dropped_session"] = qc.n_dropped_session;
  j["n_epochs"] = qc.n_epochs;
  j["n_skipped_diffs"] = qc.n_skipped_diffs;
  j["n_multi_queue_diffs"] = qc.n_multi_queue_diffs;
  j["n_unclassified"] = qc.n_unclassified;
  j["n_events_per_queue"] = qc.n_events_per_queue;
  j["n_events_pair12"] = qc.n_events_pair12;
  j["n_events_pair_m11"] = qc.n_events_pair_m11;
  j["aes"] = qc.aes;
  return j.dump(2) + "\n";
}

}  // namespace qrlob
