#include "qrlob/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace qrlob {

namespace {

double total_rate(const std::vector<Flow>& flows) {
  double total = 0;
  for (const Flow& f : flows) total += f.rate;
  return total;
}

const Flow& pick_flow(const std::vector<Flow>& flows, double total, Rng& rng) {
  double u = rng.uniform() * total;
  for (const Flow& f : flows) {
    u -= f.rate;
    if (u <= 0) return f;
  }
  return flows.back();
}

void apply_event(LobState& st, const Flow& f) {
  st.size_at(f.queue) += f.type == EventType::LimitInsert ? 1 : -1;
}

// Piecewise-constant series sampled at bin edges; std of the log returns.
double bin_return_std(const std::vector<MidPoint>& series, double horizon_s, double bin_s) {
  if (series.empty() || bin_s <= 0 || horizon_s < bin_s)
    return std::numeric_limits<double>::quiet_NaN();
  const int n_edges = static_cast<int>(horizon_s / bin_s) + 1;
  std::vector<double> returns;
  returns.reserve(n_edges - 1);
  size_t pos = 0;
  double prev = series.front().mid;
  for (int k = 0; k < n_edges; ++k) {
    const double t = k * bin_s;
    while (pos + 1 < series.size() && series[pos + 1].t <= t) ++pos;
    const double v = series[pos].mid;
    if (k > 0) {
      if (!(v > 0) || !(prev > 0)) return std::numeric_limits<double>::quiet_NaN();
      returns.push_back(std::log(v / prev));
    }
    prev = v;
  }
  if (returns.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (returns.size() == 1) return 0.0;
  double mean = 0;
  for (double r : returns) mean += r;
  mean /= returns.size();
  double ss = 0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  return std::sqrt(ss / (returns.size() - 1));
}

}  // namespace

Step step(LobState& state, const IntensityModel& model, Rng& rng) {
  std::vector<Flow> flows;
  flow_row(state, model, flows);
  const double total = total_rate(flows);
  if (total <= 0) throw Absorbing("no transition has positive rate");
  const double dwell = rng.exponential(total);
  const Flow& f = pick_flow(flows, total, rng);
  apply_event(state, f);
  return Step{dwell, f.queue, f.type};
}

SimPath simulate_period(const LobState& initial, const IntensityModel& model, double horizon_s,
                        Rng& rng, const SimRecording& rec, const EventSink& sink,
                        int64_t max_events) {
  SimPath path;
  path.horizon_s = horizon_s;
  path.initial = initial;
  LobState st = initial;
  path.pref_path.push_back({0.0, st.pref_half_ticks});
  double last_mid = mid_price(st, model.tick_value);
  if (rec.mid) path.mid_path.push_back({0.0, last_mid});

  std::vector<Flow> flows;
  double t = 0;
  while (max_events < 0 || path.n_events < max_events) {
    flow_row(st, model, flows);
    const double total = total_rate(flows);
    if (total <= 0) break;
    const double dwell = rng.exponential(total);
    if (t + dwell >= horizon_s) break;
    t += dwell;
    const Flow& f = pick_flow(flows, total, rng);
    if (sink) sink(t, dwell, st, f.queue, f.type);
    apply_event(st, f);
    ++path.n_events;
    if (rec.events) path.events.push_back({t, f.queue, f.type});
    if (rec.mid) {
      const double m = mid_price(st, model.tick_value);
      if (m != last_mid) {
        path.mid_path.push_back({t, m});
        last_mid = m;
      }
    }
  }
  path.terminal = st;
  return path;
}

void QueueReactiveParams::validate(int K) const {
  if (!(theta >= 0 && theta <= 1)) throw InputError("theta must lie in [0, 1]");
  if (!(theta_reinit >= 0 && theta_reinit <= 1))
    throw InputError("theta_reinit must lie in [0, 1]");
  if (static_cast<int>(invariant_laws.size()) != K)
    throw InputError("need one invariant law per queue distance");
  for (const auto& law : invariant_laws) {
    if (law.dims != 1 || law.probs.empty()) throw InputError("invariant laws must be 1-D");
    if (std::abs(law.total() - 1.0) > 1e-9) throw InputError("invariant laws must be normalized");
  }
  if (static_cast<int>(aes.size()) != K) throw InputError("need one event size per queue distance");
  for (double a : aes)
    if (!(a > 0)) throw InputError("event sizes must be positive");
}

std::vector<DiscreteSampler> make_samplers(const std::vector<StationaryLaw>& laws) {
  std::vector<DiscreteSampler> out;
  out.reserve(laws.size());
  for (const auto& law : laws) out.emplace_back(law);
  return out;
}

LobState draw_from_laws(int K, const std::vector<DiscreteSampler>& samplers,
                        int64_t pref_half_ticks, Rng& rng) {
  LobState st = LobState::empty(K, pref_half_ticks);
  for (int d = 1; d <= K; ++d) {
    st.size_at(QueueIndex(d)) = samplers[d - 1].sample(rng);
    st.size_at(QueueIndex(-d)) = samplers[d - 1].sample(rng);
  }
  return st;
}

void shift_book(LobState& st, int dir, const QueueReactiveParams& params,
                const std::vector<DiscreteSampler>& samplers, Rng& rng) {
  const int K = st.K;
  auto renorm = [&params](int32_t v, int from_d, int to_d) -> int32_t {
    if (v <= 0 || from_d == to_d) return std::max(v, 0);
    const double shares = static_cast<double>(v) * params.aes[from_d - 1];
    return static_cast<int32_t>(std::llround(shares / params.aes[to_d - 1]));
  };
  LobState next = st;
  next.pref_half_ticks += 2 * dir;
  const int in = dir > 0 ? 1 : -1;  // side the price moves into
  for (int d = 1; d < K; ++d)
    next.size_at(QueueIndex(in * d)) = renorm(st.size_at(QueueIndex(in * (d + 1))), d + 1, d);
  next.size_at(QueueIndex(in * K)) = samplers[K - 1].sample(rng);
  next.size_at(QueueIndex(-in)) = st.size_at(QueueIndex(in));  // the crossed queue, empty
  for (int d = 2; d <= K; ++d)
    next.size_at(QueueIndex(-in * d)) = renorm(st.size_at(QueueIndex(-in * (d - 1))), d - 1, d);
  st = next;
}

SimPath simulate_queue_reactive(const LobState& initial, const IntensityModel& model,
                                const QueueReactiveParams& params, double horizon_s, Rng& rng,
                                const SimRecording& rec, const EventSink& sink) {
  params.validate(model.K);
  if (initial.K != model.K) throw InputError("initial state depth mismatch");
  const auto samplers = make_samplers(params.invariant_laws);

  SimPath path;
  path.horizon_s = horizon_s;
  path.initial = initial;
  LobState st = initial;
  path.pref_path.push_back({0.0, st.pref_half_ticks});
  double last_mid = mid_price(st, model.tick_value);
  if (rec.mid) path.mid_path.push_back({0.0, last_mid});

  std::vector<Flow> flows;
  double t = 0;
  while (true) {
    flow_row(st, model, flows);
    const double total = total_rate(flows);
    if (total <= 0) break;
    const double dwell = rng.exponential(total);
    if (t + dwell >= horizon_s) break;
    t += dwell;
    const Flow& f = pick_flow(flows, total, rng);
    if (sink) sink(t, dwell, st, f.queue, f.type);
    const int64_t mid_before = mid_sum_half_ticks(st);
    apply_event(st, f);
    ++path.n_events;
    if (rec.events) path.events.push_back({t, f.queue, f.type});

    const int64_t mid_after = mid_sum_half_ticks(st);
    if (mid_after != mid_before) {
      const int dir = mid_after > mid_before ? 1 : -1;
      if (st.size_at(QueueIndex(dir)) == 0 && rng.bernoulli(params.theta)) {
        shift_book(st, dir, params, samplers, rng);
        path.pref_path.push_back({t, st.pref_half_ticks});
        if (rng.bernoulli(params.theta_reinit)) {
          const LobState redrawn = draw_from_laws(st.K, samplers, st.pref_half_ticks, rng);
          st.q = redrawn.q;
        }
      }
    }
    if (rec.mid) {
      const double m = mid_price(st, model.tick_value);
      if (m != last_mid) {
        path.mid_path.push_back({t, m});
        last_mid = m;
      }
    }
  }
  path.terminal = st;
  return path;
}

PathStats path_stats(const SimPath& path, double bin_s, double tick_value) {
  PathStats stats;
  stats.n_events = path.n_events;
  stats.n_pref_changes = std::max<int64_t>(0, static_cast<int64_t>(path.pref_path.size()) - 1);

  if (stats.n_pref_changes >= 2) {
    int64_t nc = 0, na = 0;
    for (size_t i = 2; i < path.pref_path.size(); ++i) {
      const int64_t d_prev =
          path.pref_path[i - 1].pref_half_ticks - path.pref_path[i - 2].pref_half_ticks;
      const int64_t d_cur = path.pref_path[i].pref_half_ticks - path.pref_path[i - 1].pref_half_ticks;
      if ((d_prev > 0) == (d_cur > 0))
        ++nc;
      else
        ++na;
    }
    stats.eta = na > 0 ? static_cast<double>(nc) / (2.0 * na)
                       : std::numeric_limits<double>::infinity();
  }

  stats.vol = bin_return_std(path.mid_path, path.horizon_s, bin_s);

  std::vector<MidPoint> pref_series;
  pref_series.reserve(path.pref_path.size());
  for (const PrefPoint& p : path.pref_path)
    pref_series.push_back({p.t, static_cast<double>(p.pref_half_ticks) * tick_value / 2.0});
  stats.vol_pref = bin_return_std(pref_series, path.horizon_s, bin_s);
  return stats;
}

void parallel_for(int64_t n, int jobs, const std::function<void(int64_t)>& body) {
  if (n <= 0) return;
  if (jobs <= 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  const int n_workers = static_cast<int>(std::min<int64_t>(jobs, n));
  std::atomic<int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      try {
        for (int64_t i; (i = next.fetch_add(1)) < n;) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : workers) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace qrlob
