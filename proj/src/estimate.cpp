#include "qrlob/estimate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "qrlob/csv.hpp"

namespace qrlob {

namespace {

constexpr auto L = EventType::LimitInsert;
constexpr auto C = EventType::Cancel;
constexpr auto M = EventType::MarketOrder;

struct Column {
  std::vector<double> exposure;
  std::array<std::vector<int64_t>, 3> counts;

  explicit Column(int cap) : exposure(cap + 1, 0.0) {
    for (auto& c : counts) c.assign(cap + 1, 0);
  }
  int64_t n_obs(int s) const { return counts[0][s] + counts[1][s] + counts[2][s]; }
};

std::string regime_name(ModelKind kind, int d, int r) {
  return "d=" + std::to_string(d) + " regime=" + IntensityModel::regime_keys(kind, d)[r];
}

IntensityModel model_skeleton(ModelKind kind, int K, const EstimateOptions& opt) {
  IntensityModel mdl;
  mdl.kind = kind;
  mdl.K = K;
  mdl.cap = opt.c_max;
  mdl.tick_value = opt.tick_value;
  mdl.aes = opt.aes;
  if (mdl.aes.empty()) mdl.aes.assign(K, 1.0);
  if (static_cast<int>(mdl.aes.size()) != K)
    throw InputError("estimation: aes must have one entry per distance");
  mdl.tables.resize(K);
  for (int d = 1; d <= K; ++d) {
    mdl.tables[d - 1].resize(IntensityModel::regime_keys(kind, d).size());
    for (auto& regime : mdl.tables[d - 1])
      for (auto& v : regime) v.assign(opt.c_max + 1, 0.0);
  }
  return mdl;
}

/// Rates from one conditioning column; sparse sizes inherit the nearest
/// populated size's rates so the table is total.
void finalize_column(const Column& col, std::array<std::vector<double>, 3>& rates, int distance,
                     int regime, ModelKind kind, const EstimateOptions& opt,
                     std::vector<CellEstimate>& cells, EstimationQc& qc) {
  const int cap = opt.c_max;

  std::vector<int> donors;
  for (int s = 0; s <= cap; ++s)
    if (col.n_obs(s) >= opt.n_obs_floor) donors.push_back(s);
  if (donors.empty())
    for (int s = 0; s <= cap; ++s)
      if (col.n_obs(s) >= 1) donors.push_back(s);
  if (donors.empty()) {
    qc.empty_regimes.push_back(regime_name(kind, distance, regime));
    return;
  }
  auto nearest = [&donors](int s) {
    int best = donors.front();
    for (int d : donors)
      if (std::abs(d - s) < std::abs(best - s)) best = d;
    return best;
  };

  for (int s = 0; s <= cap; ++s) {
    const int64_t n = col.n_obs(s);
    if (n >= 1) {
      const double lam_total = static_cast<double>(n) / col.exposure[s];
      for (int t = 0; t < 3; ++t) {
        CellEstimate cell;
        cell.distance = distance;
        cell.regime = regime;
        cell.size = s;
        cell.etype = static_cast<EventType>(t);
        cell.rate = static_cast<double>(col.counts[t][s]) / col.exposure[s];
        const double p_hat = static_cast<double>(col.counts[t][s]) / static_cast<double>(n);
        const RateInterval ci = confidence_interval(lam_total, p_hat, n);
        cell.ci_low = ci.low;
        cell.ci_high = ci.high;
        cell.n_obs = n;
        cell.filled = n < opt.n_obs_floor;
        cells.push_back(cell);
      }
    }
    if (n >= opt.n_obs_floor) {
      for (int t = 0; t < 3; ++t)
        rates[t][s] = static_cast<double>(col.counts[t][s]) / col.exposure[s];
    } else {
      const int from = nearest(s);
      for (int t = 0; t < 3; ++t)
        rates[t][s] = static_cast<double>(col.counts[t][from]) / col.exposure[from];
      if (s == 0) {
        rates[static_cast<int>(C)][0] = 0.0;  // no unit to remove at size zero
        rates[static_cast<int>(M)][0] = 0.0;
      }
      ++qc.n_filled_cells;
    }
  }
}

int infer_depth(const EstimateOptions& opt, std::initializer_list<const std::vector<EventRecord>*> inputs,
                int floor_depth) {
  int K = std::max(opt.K, floor_depth);
  if (opt.K == 0)
    for (const auto* events : inputs)
      for (const EventRecord& e : *events) K = std::max(K, e.queue.distance());
  if (K < 1) throw NoData("estimation: no events");
  if (K > kMaxDepth) throw InputError("estimation: queue distance exceeds the supported depth");
  return K;
}

bool own_size_positive(const EventRecord& e, int own_size) {
  return e.etype == L || own_size > 0;
}

}  // namespace

RateInterval confidence_interval(double lambda_hat, double p_hat, int64_t n_obs) {
  if (n_obs < 1) throw InputError("confidence interval needs at least one observation");
  const double z = 1.96;
  const double root_n = std::sqrt(static_cast<double>(n_obs));
  const double lam_lo = lambda_hat * std::max(0.0, 1.0 - z / root_n);
  const double lam_hi = lambda_hat * (1.0 + z / root_n);
  const double p_half = z * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n_obs));
  const double p_lo = std::max(0.0, p_hat - p_half);
  const double p_hi = std::min(1.0, p_hat + p_half);
  return RateInterval{lam_lo * p_lo, lam_hi * p_hi};
}

EstimationResult estimate_model_I(const std::vector<EventRecord>& per_queue,
                                  const EstimateOptions& opt) {
  const int K = infer_depth(opt, {&per_queue}, 0);
  EstimationResult res;
  res.model = model_skeleton(ModelKind::ModelI, K, opt);

  std::vector<Column> cols(K, Column(opt.c_max));
  for (const EventRecord& e : per_queue) {
    ++res.qc.n_events;
    const int d = e.queue.distance();
    if (d > K || e.dt <= 0 || e.qb1 < 0 || !own_size_positive(e, e.qb1)) {
      ++res.qc.n_rejected;
      continue;
    }
    const int s = std::min(e.qb1, opt.c_max);
    cols[d - 1].exposure[s] += e.dt;
    ++cols[d - 1].counts[static_cast<int>(e.etype)][s];
  }

  for (int d = 1; d <= K; ++d)
    finalize_column(cols[d - 1], res.model.tables[d - 1][0], d, 0, res.model.kind, opt, res.cells,
                    res.qc);
  res.model.validate();
  return res;
}

namespace {

/// Shared pair(1,2) accumulation for the regime-switching models: d1 exposure
/// keyed by the first queue, d2 keyed by (first queue occupied?, second size).
/// ModelIIb takes its d1 estimates from the pair(-1,1) scope instead, so d1
/// accumulation is optional here.
void accumulate_pair12(const std::vector<EventRecord>& pair12, const EstimateOptions& opt,
                       Column* d1_col, std::array<Column, 2>& d2_cols, EstimationQc& qc) {
  for (const EventRecord& e : pair12) {
    ++qc.n_events;
    const int d = e.queue.distance();
    if ((d != 1 && d != 2) || e.dt <= 0 || e.qb1 < 0 || e.qb2 < 0) {
      ++qc.n_rejected;
      continue;
    }
    const int own = d == 1 ? e.qb1 : e.qb2;
    if (!own_size_positive(e, own)) {
      ++qc.n_rejected;
      continue;
    }
    // Market orders hit the best queue only.
    if (e.etype == M && d == 2 && e.qb1 > 0) {
      ++qc.n_rejected;
      continue;
    }
    const int s1 = std::min(e.qb1, opt.c_max);
    const int s2 = std::min(e.qb2, opt.c_max);
    const int r2 = e.qb1 > 0 ? 1 : 0;
    if (d1_col) d1_col->exposure[s1] += e.dt;
    d2_cols[r2].exposure[s2] += e.dt;
    if (d == 1) {
      if (d1_col) ++d1_col->counts[static_cast<int>(e.etype)][s1];
    } else {
      ++d2_cols[r2].counts[static_cast<int>(e.etype)][s2];
    }
  }
}

/// Distances 3..K re-use the per-queue estimator; market orders are not part
/// of the deeper queues' flow in the regime-switching models.
void accumulate_tail(const std::vector<EventRecord>& per_queue_tail, int K,
                     const EstimateOptions& opt, std::vector<Column>& tail_cols,
                     EstimationQc& qc) {
  for (const EventRecord& e : per_queue_tail) {
    const int d = e.queue.distance();
    if (d < 3) continue;
    ++qc.n_events;
    if (d > K || e.dt <= 0 || e.qb1 < 0 || !own_size_positive(e, e.qb1) || e.etype == M) {
      ++qc.n_rejected;
      continue;
    }
    const int s = std::min(e.qb1, opt.c_max);
    tail_cols[d - 3].exposure[s] += e.dt;
    ++tail_cols[d - 3].counts[static_cast<int>(e.etype)][s];
  }
}

}  // namespace

EstimationResult estimate_model_IIa(const std::vector<EventRecord>& pair12,
                                    const EstimateOptions& opt,
                                    const std::vector<EventRecord>& per_queue_tail) {
  const int K = infer_depth(opt, {&pair12, &per_queue_tail}, 2);
  EstimationResult res;
  res.model = model_skeleton(ModelKind::ModelIIa, K, opt);

  Column d1_col(opt.c_max);
  std::array<Column, 2> d2_cols{Column(opt.c_max), Column(opt.c_max)};
  accumulate_pair12(pair12, opt, &d1_col, d2_cols, res.qc);

  std::vector<Column> tail_cols(std::max(0, K - 2), Column(opt.c_max));
  accumulate_tail(per_queue_tail, K, opt, tail_cols, res.qc);

  finalize_column(d1_col, res.model.tables[0][0], 1, 0, res.model.kind, opt, res.cells, res.qc);
  for (int r = 0; r < 2; ++r)
    finalize_column(d2_cols[r], res.model.tables[1][r], 2, r, res.model.kind, opt, res.cells,
                    res.qc);
  for (int d = 3; d <= K; ++d)
    finalize_column(tail_cols[d - 3], res.model.tables[d - 1][0], d, 0, res.model.kind, opt,
                    res.cells, res.qc);

  // The regime-switching layout keeps market-order rates only where market
  // orders can land: wipe whatever the fill policy copied elsewhere.
  for (double& x : res.model.tables[1][1][static_cast<int>(M)]) x = 0.0;
  for (int d = 3; d <= K; ++d)
    for (double& x : res.model.tables[d - 1][0][static_cast<int>(M)]) x = 0.0;

  res.model.validate();
  return res;
}

RegimeThresholds compute_thresholds(const StationaryLaw& first_queue_law) {
  if (first_queue_law.dims != 1) throw InputError("thresholds need a 1-D law");
  const auto& p = first_queue_law.probs;
  double pos_mass = 0;
  for (size_t s = 1; s < p.size(); ++s) pos_mass += p[s];
  if (pos_mass <= 0) throw DegenerateLaw("first-queue law has no mass on positive sizes");

  auto cond_quantile = [&](double q) {
    double cdf = 0;
    for (size_t s = 1; s < p.size(); ++s) {
      cdf += p[s];
      if (cdf + 1e-12 * pos_mass >= q * pos_mass) return static_cast<int>(s);
    }
    return static_cast<int>(p.size()) - 1;
  };

  RegimeThresholds th;
  th.m = cond_quantile(1.0 / 3.0);
  th.l = cond_quantile(2.0 / 3.0);
  if (!(0 < th.m && th.m < th.l))
    throw DegenerateLaw("first-queue law too concentrated to split into ranges");
  return th;
}

EstimationResult estimate_model_IIb(const std::vector<EventRecord>& pair_m11,
                                    const std::vector<EventRecord>& pair12,
                                    const RegimeThresholds& thresholds, const EstimateOptions& opt,
                                    const std::vector<EventRecord>& per_queue_tail) {
  if (!(0 < thresholds.m && thresholds.m < thresholds.l))
    throw InputError("estimation: thresholds must satisfy 0 < m < l");
  const int K = infer_depth(opt, {&pair_m11, &pair12, &per_queue_tail}, 2);
  EstimationResult res;
  res.model = model_skeleton(ModelKind::ModelIIb, K, opt);
  res.model.m = thresholds.m;
  res.model.l = thresholds.l;

  // First-queue rates keyed by (own size, opposite first-queue range). Every
  // record exposes both first queues: conditioning time goes to both cells,
  // the event count only to its own queue's cell.
  std::array<Column, 4> d1_cols{Column(opt.c_max), Column(opt.c_max), Column(opt.c_max),
                                Column(opt.c_max)};
  for (const EventRecord& e : pair_m11) {
    ++res.qc.n_events;
    const int d = e.queue.distance();
    if (d != 1 || e.dt <= 0 || e.qb1 < 0 || e.qb2 < 0) {
      ++res.qc.n_rejected;
      continue;
    }
    const int bid = e.qb1;
    const int ask = e.qb2;
    const int own = e.queue.is_ask() ? ask : bid;
    if (!own_size_positive(e, own)) {
      ++res.qc.n_rejected;
      continue;
    }
    const int bid_cell = std::min(bid, opt.c_max);
    const int ask_cell = std::min(ask, opt.c_max);
    const int bid_regime = res.model.opp_range(ask);
    const int ask_regime = res.model.opp_range(bid);
    d1_cols[bid_regime].exposure[bid_cell] += e.dt;
    d1_cols[ask_regime].exposure[ask_cell] += e.dt;
    if (e.queue.is_ask())
      ++d1_cols[ask_regime].counts[static_cast<int>(e.etype)][ask_cell];
    else
      ++d1_cols[bid_regime].counts[static_cast<int>(e.etype)][bid_cell];
  }

  std::array<Column, 2> d2_cols{Column(opt.c_max), Column(opt.c_max)};
  accumulate_pair12(pair12, opt, nullptr, d2_cols, res.qc);

  std::vector<Column> tail_cols(std::max(0, K - 2), Column(opt.c_max));
  accumulate_tail(per_queue_tail, K, opt, tail_cols, res.qc);

  for (int r = 0; r < 4; ++r)
    finalize_column(d1_cols[r], res.model.tables[0][r], 1, r, res.model.kind, opt, res.cells,
                    res.qc);
  for (int r = 0; r < 2; ++r)
    finalize_column(d2_cols[r], res.model.tables[1][r], 2, r, res.model.kind, opt, res.cells,
                    res.qc);
  for (int d = 3; d <= K; ++d)
    finalize_column(tail_cols[d - 3], res.model.tables[d - 1][0], d, 0, res.model.kind, opt,
                    res.cells, res.qc);

  for (double& x : res.model.tables[1][1][static_cast<int>(M)]) x = 0.0;
  for (int d = 3; d <= K; ++d)
    for (double& x : res.model.tables[d - 1][0][static_cast<int>(M)]) x = 0.0;

  res.model.validate();
  return res;
}

EstimationResult estimate_poisson_baseline(const std::vector<EventRecord>& per_queue,
                                           const EstimateOptions& opt) {
  const int K = infer_depth(opt, {&per_queue}, 0);
  EstimationResult res;
  res.model = model_skeleton(ModelKind::PoissonBaseline, K, opt);

  std::vector<Column> cols(K, Column(opt.c_max));
  for (const EventRecord& e : per_queue) {
    ++res.qc.n_events;
    const int d = e.queue.distance();
    if (d > K || e.dt <= 0 || e.qb1 < 0 || !own_size_positive(e, e.qb1)) {
      ++res.qc.n_rejected;
      continue;
    }
    const int s = std::min(e.qb1, opt.c_max);
    cols[d - 1].exposure[s] += e.dt;
    ++cols[d - 1].counts[static_cast<int>(e.etype)][s];
  }

  for (int d = 1; d <= K; ++d) {
    const Column& col = cols[d - 1];
    double exposure = 0, weighted = 0;
    int64_t n_l = 0, n_c = 0, n_m = 0, n_all = 0;
    for (int s = 0; s <= opt.c_max; ++s) {
      exposure += col.exposure[s];
      weighted += static_cast<double>(s) * col.exposure[s];
      n_l += col.counts[static_cast<int>(L)][s];
      n_c += col.counts[static_cast<int>(C)][s];
      n_m += col.counts[static_cast<int>(M)][s];
      n_all += col.n_obs(s);
    }
    if (n_all == 0) {
      res.qc.empty_regimes.push_back(regime_name(res.model.kind, d, 0));
      continue;
    }
    const double lam_l = exposure > 0 ? n_l / exposure : 0.0;
    const double lam_m = exposure > 0 ? n_m / exposure : 0.0;
    const double c_slope = weighted > 0 ? n_c / weighted : 0.0;
    auto& table = res.model.tables[d - 1][0];
    for (int s = 0; s <= opt.c_max; ++s) {
      table[static_cast<int>(L)][s] = lam_l;
      table[static_cast<int>(C)][s] = c_slope * s;
      table[static_cast<int>(M)][s] = s > 0 ? lam_m : 0.0;
    }

    const double lam_total = n_all / exposure;
    auto pooled_cell = [&](EventType t, int64_t count, double rate) {
      CellEstimate cell;
      cell.distance = d;
      cell.regime = 0;
      cell.size = -1;  // pooled over all sizes
      cell.etype = t;
      cell.rate = rate;
      const RateInterval ci =
          confidence_interval(lam_total, static_cast<double>(count) / n_all, n_all);
      cell.ci_low = ci.low;
      cell.ci_high = ci.high;
      cell.n_obs = n_all;
      cell.filled = n_all < opt.n_obs_floor;
      res.cells.push_back(cell);
      return count;
    };
    pooled_cell(L, n_l, lam_l);
    pooled_cell(M, n_m, lam_m);
    {
      CellEstimate cell;
      cell.distance = d;
      cell.regime = 0;
      cell.size = -1;
      cell.etype = C;
      cell.rate = c_slope;  // per-unit cancellation slope
      const double half = n_c > 0 ? 1.96 / std::sqrt(static_cast<double>(n_c)) : 0.0;
      cell.ci_low = c_slope * std::max(0.0, 1.0 - half);
      cell.ci_high = c_slope * (1.0 + half);
      cell.n_obs = std::max<int64_t>(n_c, 1);
      cell.filled = n_c < opt.n_obs_floor;
      res.cells.push_back(cell);
    }
  }
  res.model.validate();
  return res;
}

const char* scope_code(Scope s) {
  switch (s) {
    case Scope::PerQueue: return "per_queue";
    case Scope::Pair12: return "pair12";
    case Scope::PairM11: return "pair_m11";
  }
  return "?";
}

Scope scope_from_code(std::string_view code) {
  if (code == "per_queue") return Scope::PerQueue;
  if (code == "pair12") return Scope::Pair12;
  if (code == "pair_m11") return Scope::PairM11;
  throw InputError("unknown scope: " + std::string(code));
}

std::string dump_events_csv(const std::vector<EventRecord>& events, Scope scope) {
  std::string out = "scope," + std::string(scope_code(scope)) + "\n";
  out += "pref_epoch,dt_s,queue,etype,qb1,qb2\n";
  for (const EventRecord& e : events) {
    out += csv::fmt(static_cast<int64_t>(e.pref_epoch));
    out += ',';
    out += csv::fmt(e.dt);
    out += ',';
    out += csv::fmt(static_cast<int64_t>(e.queue.value()));
    out += ',';
    out += event_code(e.etype);
    out += ',';
    out += csv::fmt(static_cast<int64_t>(e.qb1));
    out += ',';
    if (e.qb2 >= 0) out += csv::fmt(static_cast<int64_t>(e.qb2));
    out += '\n';
  }
  return out;
}

std::vector<EventRecord> parse_events_csv(const std::string& text, Scope* scope_out) {
  const auto rows = csv::lines(text);
  if (rows.size() < 2) throw InputError("events csv: missing header");
  const auto scope_row = csv::split(rows[0]);
  if (scope_row.size() != 2 || scope_row[0] != "scope")
    throw InputError("events csv: first line must be scope,<name>");
  const Scope scope = scope_from_code(scope_row[1]);
  if (scope_out) *scope_out = scope;

  std::vector<EventRecord> out;
  out.reserve(rows.size() - 2);
  for (size_t i = 2; i < rows.size(); ++i) {
    const auto f = csv::split(rows[i]);
    if (f.size() != 6)
      throw InputError("events csv row " + std::to_string(i + 1) + ": expected 6 fields");
    EventRecord e;
    e.pref_epoch = static_cast<int32_t>(csv::to_i64(f[0], "pref_epoch"));
    e.dt = csv::to_double(f[1], "dt_s");
    e.queue = QueueIndex(static_cast<int>(csv::to_i64(f[2], "queue")));
    e.etype = event_from_code(f[3]);
    e.qb1 = static_cast<int32_t>(csv::to_i64(f[4], "qb1"));
    e.qb2 = f[5].empty() ? -1 : static_cast<int32_t>(csv::to_i64(f[5], "qb2"));
    out.push_back(e);
  }
  return out;
}

std::string dump_ci_csv(const EstimationResult& result) {
  std::string out = "queue,regime,size,etype,rate,ci_low,ci_high,n_obs\n";
  for (const CellEstimate& c : result.cells) {
    out += csv::fmt(static_cast<int64_t>(c.distance));
    out += ',';
    out += IntensityModel::regime_keys(result.model.kind, c.distance)[c.regime];
    out += ',';
    out += csv::fmt(static_cast<int64_t>(c.size));
    out += ',';
    out += event_code(c.etype);
    out += ',';
    out += csv::fmt(c.rate);
    out += ',';
    out += csv::fmt(c.ci_low);
    out += ',';
    out += csv::fmt(c.ci_high);
    out += ',';
    out += csv::fmt(c.n_obs);
    out += '\n';
  }
  return out;
}

}  // namespace qrlob
