#include "qrlob/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "qrlob/csv.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

namespace {

constexpr int64_t kAnchorPrefHalf = 2001;  // books start around 1000.5 half-ticks

double flow_total(const std::vector<Flow>& flows) {
  double total = 0;
  for (const Flow& f : flows) total += f.rate;
  return total;
}

const Flow& flow_pick(const std::vector<Flow>& flows, double total, Rng& rng) {
  double u = rng.uniform() * total;
  for (const Flow& f : flows) {
    u -= f.rate;
    if (u <= 0) return f;
  }
  return flows.back();
}

}  // namespace

std::vector<int64_t> Schedule::quantities() const {
  if (n_slices < 1) throw InputError("a schedule needs at least one slice");
  if (n_total < 0) throw InputError("total quantity must be nonnegative");
  const int m = n_slices;
  std::vector<double> w(m);
  if (kind == ScheduleKind::S1) {
    std::fill(w.begin(), w.end(), 1.0 / m);
  } else {
    double sum = 0;
    for (int i = 1; i <= m; ++i) {
      w[i - 1] = std::exp(-(i - 1) / 4.0) - std::exp(-i / 4.0);
      sum += w[i - 1];
    }
    for (double& x : w) x /= sum;
  }
  std::vector<int64_t> q(m);
  std::vector<std::pair<double, int>> frac(m);
  int64_t assigned = 0;
  for (int i = 0; i < m; ++i) {
    const double exact = static_cast<double>(n_total) * w[i];
    q[i] = static_cast<int64_t>(std::floor(exact));
    assigned += q[i];
    frac[i] = {exact - std::floor(exact), i};
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int64_t r = n_total - assigned, k = 0; r > 0; --r, ++k) ++q[frac[k % m].second];
  return q;
}

ProbEstimate execution_probability(const IntensityModel& model, const LobState& initial, int n0,
                                   int64_t n_paths, uint64_t seed, int jobs) {
  if (initial.K != model.K) throw InputError("initial state depth mismatch");
  if (n0 < 1) throw InputError("tracked order needs at least one unit");
  if (n_paths < 1) throw InputError("need at least one path");
  if (initial.size_at(QueueIndex(1)) <= 0)
    throw BadInitial("first ask queue must start nonempty");
  if (initial.size_at(QueueIndex(-1)) < 0)
    throw BadInitial("first bid queue must not be negative");

  const QueueIndex own(-1), opp(1);
  std::vector<uint8_t> win(n_paths, 0);
  parallel_for(n_paths, jobs, [&](int64_t path) {
    Rng rng(seed, static_cast<uint64_t>(path));
    LobState eff = initial;
    eff.size_at(own) += n0;
    int64_t ahead = initial.size_at(own);
    int64_t behind = 0;
    int64_t remaining = n0;
    std::vector<Flow> flows;
    while (true) {
      flow_row(eff, model, flows);
      const int64_t ambient = ahead + behind;
      for (Flow& f : flows)
        if (f.queue == own && f.type == EventType::Cancel)
          f.rate *= static_cast<double>(ambient) / static_cast<double>(ambient + remaining);
      const double total = flow_total(flows);
      if (total <= 0) break;  // frozen chain, the order never executes
      const Flow& f = flow_pick(flows, total, rng);
      if (f.queue == own) {
        switch (f.type) {
          case EventType::LimitInsert:
            ++behind;
            ++eff.size_at(own);
            continue;
          case EventType::Cancel:
            if (rng.below(static_cast<uint64_t>(ambient)) < static_cast<uint64_t>(ahead))
              --ahead;
            else
              --behind;
            --eff.size_at(own);
            continue;
          case EventType::MarketOrder:
            if (ahead > 0)
              --ahead;
            else
              --remaining;
            --eff.size_at(own);
            if (remaining == 0) win[path] = 1;
            break;
        }
        if (remaining == 0) break;
        continue;
      }
      eff.size_at(f.queue) += f.type == EventType::LimitInsert ? 1 : -1;
      if (f.queue == opp && eff.size_at(opp) == 0) break;  // opposite queue depleted
    }
  });
  ProbEstimate est;
  est.n_paths = n_paths;
  int64_t wins = 0;
  for (uint8_t w : win) wins += w;
  est.p = static_cast<double>(wins) / static_cast<double>(n_paths);
  est.stderr_ = std::sqrt(est.p * (1.0 - est.p) / static_cast<double>(n_paths));
  return est;
}

double vwap(const std::vector<Trade>& trades, double t0, double t1) {
  double pv = 0, v = 0;
  for (const Trade& tr : trades) {
    if (tr.t < t0 || tr.t > t1 || tr.shares <= 0) continue;
    pv += tr.price * static_cast<double>(tr.shares);
    v += static_cast<double>(tr.shares);
  }
  if (v <= 0) throw NoTrades("no trades in the window");
  return pv / v;
}

namespace {

// One tactic run: an ambient book plus the agent's resting buy order. The
// order adds its ceil(shares / event size) units to the queue it rests at,
// so every intensity lookup sees the enlarged queue. Ambient cancellations
// are thinned to the ambient fraction and never remove the agent's order.
struct AgentEngine {
  const IntensityModel& model;
  const QueueReactiveParams& params;
  const std::vector<DiscreteSampler>& samplers;
  Rng& rng;

  LobState amb;
  double t = 0;

  bool active = false;
  int dist = 0;          // bid-side distance, may exceed K after price moves
  double rem = 0;        // shares still resting
  int64_t ahead = 0;     // ambient units with queue priority over the agent

  TacticKind tactic = TacticKind::T1;
  bool track_mid = false;
  int64_t mid_sum_at_post = 0;                // T1 trigger baseline
  std::optional<double> best_bid_at_post;     // T2 trigger baseline

  std::vector<double> fill_shares;            // internal double precision
  std::vector<Fill> fills;
  struct TaggedTrade {
    Trade trade;
    int slice = 0;
  };
  std::vector<TaggedTrade> tape;
  int slice_idx = 0;
  std::vector<double> mid_time_acc;           // per slice, for empty-slice VWAP
  std::vector<MidPoint> mid_path;
  int64_t n_pref_changes = 0;
  int64_t n_events = 0;
  double passive_sh = 0;

  AgentEngine(const IntensityModel& m, const QueueReactiveParams& p,
              const std::vector<DiscreteSampler>& s, Rng& r, int n_slices)
      : model(m), params(p), samplers(s), rng(r), mid_time_acc(n_slices, 0.0) {
    amb = draw_from_laws(m.K, s, kAnchorPrefHalf, r);
  }

  int agent_units() const {
    if (!active || dist > model.K) return 0;
    return static_cast<int>(std::ceil(rem / params.aes[dist - 1]));
  }

  LobState eff_scratch;

  const LobState& effective() {
    eff_scratch = amb;
    const int u = agent_units();
    if (u > 0) eff_scratch.size_at(QueueIndex(-dist)) += u;
    return eff_scratch;
  }

  double bid_px(int d) const {
    return static_cast<double>(amb.pref_half_ticks - (2 * d - 1)) * model.tick_value / 2.0;
  }
  double ask_px(int d) const {
    return static_cast<double>(amb.pref_half_ticks + (2 * d - 1)) * model.tick_value / 2.0;
  }

  int first_ambient_bid() const {
    for (int d = 1; d <= amb.K; ++d)
      if (amb.size_at(QueueIndex(-d)) > 0) return d;
    return 0;
  }

  std::optional<double> effective_best_bid_px() const {
    int d = first_ambient_bid();
    if (active && dist <= model.K && (d == 0 || dist < d)) d = dist;
    if (d == 0) return std::nullopt;
    return bid_px(d);
  }

  void record_mid() {
    if (!track_mid) return;
    const double m = mid_price(effective(), model.tick_value);
    if (mid_path.empty() || mid_path.back().mid != m) mid_path.push_back({t, m});
  }

  void add_fill(double price, double shares, bool passive) {
    fill_shares.push_back(shares);
    fills.push_back({t, price, std::llround(shares), passive});
    if (passive) passive_sh += shares;
  }

  void add_trade(double price, double shares) {
    tape.push_back({{t, price, std::llround(shares)},
                    std::min<int>(slice_idx, static_cast<int>(mid_time_acc.size()) - 1)});
  }

  // Reference-price machinery shared with the plain simulator: a midprice
  // move with the crossing queue empty (agent included) shifts the book with
  // probability theta. The agent's order keeps its absolute price, so its
  // distance label moves with the shift; beyond-window labels are kept and
  // the order waits out of the book until a tactic repost or a later shift.
  void maybe_move_pref(int64_t mid_before) {
    const int64_t mid_after = mid_sum_half_ticks(effective());
    if (mid_after == mid_before) return;
    const int dir = mid_after > mid_before ? 1 : -1;
    if (effective().size_at(QueueIndex(dir)) != 0 || !rng.bernoulli(params.theta)) return;
    shift_book(amb, dir, params, samplers, rng);
    ++n_pref_changes;
    if (active) {
      const int old_dist = dist;
      dist += dir;  // price up: bid labels move away, price down: closer
      if (old_dist <= model.K && dist >= 1 && dist <= model.K) {
        const double shares = static_cast<double>(ahead) * params.aes[old_dist - 1];
        ahead = std::max<int64_t>(0, std::llround(shares / params.aes[dist - 1]));
      }
      if (dist >= 1 && dist <= model.K)
        ahead = std::min<int64_t>(ahead, amb.size_at(QueueIndex(-dist)));
    }
    if (rng.bernoulli(params.theta_reinit)) {
      const LobState redrawn = draw_from_laws(amb.K, samplers, amb.pref_half_ticks, rng);
      amb.q = redrawn.q;
      if (active && dist >= 1 && dist <= model.K)
        ahead = std::min<int64_t>(ahead, amb.size_at(QueueIndex(-dist)));
    }
  }

  // Buy market order walking the ask side at prevailing prices; a fully
  // drained window prices the remainder one level beyond it.
  void market_buy(double shares) {
    while (shares > 0) {
      int d = 0;
      for (int k = 1; k <= amb.K; ++k)
        if (amb.size_at(QueueIndex(k)) > 0) {
          d = k;
          break;
        }
      if (d == 0) {
        add_fill(ask_px(amb.K + 1), shares, false);
        add_trade(ask_px(amb.K + 1), shares);
        return;
      }
      const int64_t avail_units = amb.size_at(QueueIndex(d));
      const double avail = static_cast<double>(avail_units) * params.aes[d - 1];
      double take;
      int64_t units;
      if (shares >= avail) {
        take = avail;
        units = avail_units;
      } else {
        take = shares;
        units = static_cast<int64_t>(std::ceil(take / params.aes[d - 1]));
      }
      const int64_t mid_before = mid_sum_half_ticks(effective());
      amb.size_at(QueueIndex(d)) -= static_cast<int32_t>(units);
      add_fill(ask_px(d), take, false);
      add_trade(ask_px(d), take);
      shares -= take;
      maybe_move_pref(mid_before);
    }
  }

  void post(double shares) {
    if (shares <= 0) {
      active = false;
      rem = 0;
      return;
    }
    const int64_t mid_before = mid_sum_half_ticks(effective());
    int d = first_ambient_bid();
    if (d == 0) d = 1;
    active = true;
    dist = d;
    rem = shares;
    ahead = amb.size_at(QueueIndex(-d));
    maybe_move_pref(mid_before);
    mid_sum_at_post = mid_sum_half_ticks(effective());
    best_bid_at_post = effective_best_bid_px();
  }

  void cancel() {
    if (!active) return;
    const int64_t mid_before = mid_sum_half_ticks(effective());
    active = false;
    maybe_move_pref(mid_before);
  }

  void run_tactic_triggers() {
    if (!active) return;
    if (tactic == TacticKind::T1) {
      if (mid_sum_half_ticks(effective()) != mid_sum_at_post) {
        const double quota = rem;
        cancel();
        rem = 0;
        if (quota > 0) market_buy(quota);
      }
      return;
    }
    for (int guard = 0; guard < 2 * kMaxDepth && active; ++guard) {
      bool fire = false;
      if (dist > model.K) {
        fire = true;  // out of the tracked window, repost at the revealed best
      } else if (effective_best_bid_px() != best_bid_at_post) {
        fire = true;
      } else {
        const int d = first_ambient_bid();
        fire = d != 0 && d > dist;  // alone at the best with depth behind
      }
      if (!fire) return;
      const double quota = rem;
      cancel();
      post(quota);
    }
  }

  void after_mutation(int64_t mid_before) {
    maybe_move_pref(mid_before);
    run_tactic_triggers();
    record_mid();
  }

  // One ambient event; returns false when the chain has no outgoing rate.
  bool ambient_step(double stop_t, std::vector<Flow>& flows) {
    flow_row(effective(), model, flows);
    if (active && dist <= model.K) {
      const QueueIndex own(-dist);
      const int64_t ambient = amb.size_at(own);
      const int64_t eff_units = ambient + agent_units();
      for (Flow& f : flows)
        if (f.queue == own && f.type == EventType::Cancel)
          f.rate *= static_cast<double>(ambient) / static_cast<double>(eff_units);
    }
    const double total = flow_total(flows);
    if (total <= 0) {
      advance_to(stop_t);
      return false;
    }
    const double dwell = rng.exponential(total);
    if (t + dwell >= stop_t) {
      advance_to(stop_t);
      return false;
    }
    advance_to(t + dwell);
    const Flow& f = flow_pick(flows, total, rng);
    const int64_t mid_before = mid_sum_half_ticks(effective());
    apply_ambient(f);
    ++n_events;
    after_mutation(mid_before);
    return true;
  }

  void apply_ambient(const Flow& f) {
    const int d = f.queue.distance();
    const bool at_agent = active && !f.queue.is_ask() && d == dist && dist <= model.K;
    switch (f.type) {
      case EventType::LimitInsert:
        ++amb.size_at(f.queue);  // joins behind the agent
        return;
      case EventType::Cancel: {
        if (at_agent) {
          const int64_t ambient = amb.size_at(f.queue);
          if (rng.below(static_cast<uint64_t>(ambient)) < static_cast<uint64_t>(ahead)) --ahead;
        }
        --amb.size_at(f.queue);
        return;
      }
      case EventType::MarketOrder: {
        const double aes = params.aes[d - 1];
        if (at_agent && ahead == 0) {
          const double fill = std::min(aes, rem);
          rem -= fill;
          add_fill(bid_px(dist), fill, true);
          add_trade(bid_px(dist), fill);
          if (rem <= 0) {
            active = false;
            rem = 0;
          }
          return;
        }
        if (at_agent) --ahead;
        --amb.size_at(f.queue);
        const double px = f.queue.is_ask() ? ask_px(d) : bid_px(d);
        add_trade(px, aes);
        return;
      }
    }
  }

  void advance_to(double t2) {
    if (t2 <= t) return;
    if (slice_idx < static_cast<int>(mid_time_acc.size()))
      mid_time_acc[slice_idx] += mid_price(effective(), model.tick_value) * (t2 - t);
    t = t2;
  }
};

struct PathOutput {
  ExecutionReport report;
  std::vector<Fill> fills;
  std::vector<MidPoint> mid_path;
  double arrival_mid = 0;
};

PathOutput run_agent_path(const IntensityModel& model, const QueueReactiveParams& params,
                          const std::vector<DiscreteSampler>& samplers, const TcaConfig& cfg,
                          const std::vector<int64_t>& slice_units, bool record_mid, uint64_t seed,
                          uint64_t stream) {
  Rng rng(seed, stream);
  const int n_slices = static_cast<int>(slice_units.size());
  AgentEngine eng(model, params, samplers, rng, n_slices);
  eng.tactic = cfg.tactic.kind;
  eng.track_mid = record_mid;

  const double slice_s = cfg.tactic.slice_s;
  const double slices_end = slice_s * n_slices;
  const double horizon = std::max(cfg.horizon_s, slices_end);
  const double aes1 = params.aes[0];

  PathOutput out;
  out.arrival_mid = mid_price(eng.amb, model.tick_value);
  eng.record_mid();

  std::vector<Flow> flows;
  eng.post(static_cast<double>(slice_units[0]) * aes1);
  eng.run_tactic_triggers();
  eng.record_mid();
  while (eng.t < horizon) {
    const double next_stop =
        eng.slice_idx < n_slices ? slice_s * (eng.slice_idx + 1) : horizon;
    if (!eng.ambient_step(next_stop, flows)) {
      if (eng.slice_idx < n_slices) {
        const double quota = eng.rem;
        eng.cancel();
        eng.rem = 0;
        if (quota > 0) eng.market_buy(quota);
        ++eng.slice_idx;
        if (eng.slice_idx < n_slices)
          eng.post(static_cast<double>(slice_units[eng.slice_idx]) * aes1);
        eng.run_tactic_triggers();
        eng.record_mid();
      }
      if (eng.slice_idx >= n_slices && eng.t >= horizon) break;
    }
  }

  const int64_t n_total = std::accumulate(slice_units.begin(), slice_units.end(), int64_t{0});
  const double total_sh = static_cast<double>(n_total) * aes1;
  double pv = 0, v = 0;
  for (size_t i = 0; i < eng.fill_shares.size(); ++i) {
    pv += eng.fills[i].price * eng.fill_shares[i];
    v += eng.fill_shares[i];
  }
  ExecutionReport& rep = out.report;
  rep.p_exec = v > 0 ? pv / v : 0;
  rep.filled_shares = std::llround(v);
  rep.passive_shares = std::llround(eng.passive_sh);
  rep.n_pref_changes = eng.n_pref_changes;
  rep.n_events = eng.n_events;
  rep.passive_rate = total_sh > 0 ? eng.passive_sh / total_sh : 0;

  std::vector<Trade> trades;
  trades.reserve(eng.tape.size());
  for (const auto& tt : eng.tape) trades.push_back(tt.trade);
  if (cfg.benchmark == BenchmarkKind::Vwap && !trades.empty())
    rep.p_bench = vwap(trades, 0, horizon);
  else
    rep.p_bench = out.arrival_mid;

  if (n_total > 0 && rep.p_bench > 0) {
    rep.slippage = (rep.p_bench - rep.p_exec) / rep.p_bench;
    double p_theo = 0;
    for (int i = 0; i < n_slices; ++i) {
      double pv_i = 0, v_i = 0;
      for (const auto& tt : eng.tape)
        if (tt.slice == i) {
          pv_i += tt.trade.price * static_cast<double>(tt.trade.shares);
          v_i += static_cast<double>(tt.trade.shares);
        }
      const double vwap_i = v_i > 0 ? pv_i / v_i : eng.mid_time_acc[i] / slice_s;
      p_theo += static_cast<double>(slice_units[i]) / static_cast<double>(n_total) * vwap_i;
    }
    rep.slippage_theo = (rep.p_bench - p_theo) / rep.p_bench;
  }

  if (cfg.record_fills) out.fills = std::move(eng.fills);
  if (record_mid) out.mid_path = std::move(eng.mid_path);
  return out;
}

}  // namespace

TcaResult run_tactic(const IntensityModel& model, const QueueReactiveParams& params,
                     const TcaConfig& cfg, int64_t n_paths, uint64_t seed, int jobs) {
  params.validate(model.K);
  if (n_paths < 1) throw InputError("need at least one path");
  if (cfg.tactic.slice_s <= 0) throw InputError("slice duration must be positive");
  const std::vector<int64_t> slice_units = cfg.schedule.quantities();
  const auto samplers = make_samplers(params.invariant_laws);

  TcaResult result;
  result.reports.resize(n_paths);
  if (cfg.record_fills) result.fills.resize(n_paths);
  parallel_for(n_paths, jobs, [&](int64_t path) {
    PathOutput out = run_agent_path(model, params, samplers, cfg, slice_units, false, seed,
                                    static_cast<uint64_t>(path));
    result.reports[path] = out.report;
    if (cfg.record_fills) result.fills[path] = std::move(out.fills);
  });
  return result;
}

std::vector<ImpactCell> market_impact(const IntensityModel& model,
                                      const QueueReactiveParams& params, const ImpactConfig& cfg,
                                      uint64_t seed, int jobs) {
  params.validate(model.K);
  if (cfg.n_paths < 1) throw InputError("need at least one path");
  if (cfg.tactic.slice_s <= 0) throw InputError("slice duration must be positive");
  if (cfg.t_grid.empty() || cfg.n_values.empty())
    throw InputError("impact profiling needs a time grid and order sizes");
  for (size_t k = 0; k < cfg.t_grid.size(); ++k) {
    const double t = cfg.t_grid[k];
    if (t < 0 || t > cfg.tactic.slice_s)
      throw InputError("impact times must lie inside the slice");
    if (k > 0 && t <= cfg.t_grid[k - 1])
      throw InputError("impact time grid must be strictly increasing");
  }
  const auto samplers = make_samplers(params.invariant_laws);

  std::vector<ImpactCell> cells;
  for (int64_t n : cfg.n_values) {
    if (n < 0) throw InputError("order sizes must be nonnegative");
    if (n == 0) {
      for (double tg : cfg.t_grid) cells.push_back({tg, 0, 0.0, 0.0});
      continue;
    }
    TcaConfig cfg_one;
    cfg_one.schedule = {ScheduleKind::S1, n, 1};
    cfg_one.tactic = cfg.tactic;
    cfg_one.benchmark = BenchmarkKind::ArrivalPrice;
    const std::vector<int64_t> slice_units{n};

    const size_t nt = cfg.t_grid.size();
    std::vector<std::vector<double>> rel(nt, std::vector<double>(cfg.n_paths));
    parallel_for(cfg.n_paths, jobs, [&](int64_t path) {
      PathOutput out = run_agent_path(model, params, samplers, cfg_one, slice_units, true, seed,
                                      static_cast<uint64_t>(path));
      size_t pos = 0;
      for (size_t k = 0; k < nt; ++k) {
        const double tg = cfg.t_grid[k];
        while (pos + 1 < out.mid_path.size() && out.mid_path[pos + 1].t <= tg) ++pos;
        rel[k][path] = (out.mid_path[pos].mid - out.arrival_mid) / out.arrival_mid;
      }
    });
    for (size_t k = 0; k < nt; ++k) {
      double mean = 0;
      for (double r : rel[k]) mean += r;
      mean /= static_cast<double>(cfg.n_paths);
      double ss = 0;
      for (double r : rel[k]) ss += (r - mean) * (r - mean);
      const double se = cfg.n_paths > 1
                            ? std::sqrt(ss / (static_cast<double>(cfg.n_paths) - 1) /
                                        static_cast<double>(cfg.n_paths))
                            : 0.0;
      cells.push_back({cfg.t_grid[k], n, mean, se});
    }
  }
  return cells;
}

std::string dump_reports_csv(const TcaResult& result) {
  std::string out =
      "p_exec,p_bench,slippage,slippage_theo,passive_rate,filled_shares,passive_shares,"
      "n_pref_changes,n_events\n";
  for (const ExecutionReport& r : result.reports) {
    out += csv::fmt(r.p_exec) + ',' + csv::fmt(r.p_bench) + ',' + csv::fmt(r.slippage) + ',' +
           csv::fmt(r.slippage_theo) + ',' + csv::fmt(r.passive_rate) + ',' +
           csv::fmt(r.filled_shares) + ',' + csv::fmt(r.passive_shares) + ',' +
           csv::fmt(r.n_pref_changes) + ',' + csv::fmt(r.n_events) + '\n';
  }
  return out;
}

std::string dump_impact_csv(const std::vector<ImpactCell>& cells) {
  std::string out = "t_s,n_aes,mi,mi_se\n";
  for (const ImpactCell& c : cells)
    out += csv::fmt(c.t_s) + ',' + csv::fmt(c.n_units) + ',' + csv::fmt(c.mi) + ',' +
           csv::fmt(c.mi_se) + '\n';
  return out;
}

}  // namespace qrlob
