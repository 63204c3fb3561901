#pragma once

#include <array>
#include <string>
#include <vector>

#include "qrlob/core.hpp"
#include "qrlob/estimate.hpp"
#include "qrlob/law.hpp"
#include "qrlob/simulate.hpp"

namespace qrlob::testutil {

inline std::string fixtures_dir() { return QRLOB_FIXTURES; }

/// One regime column with size-independent rates; removals are impossible
/// from an empty queue.
inline std::array<std::vector<double>, 3> const_cell(double l, double c, double m, int cap) {
  std::array<std::vector<double>, 3> cell;
  cell[0].assign(cap + 1, l);
  cell[1].assign(cap + 1, c);
  cell[2].assign(cap + 1, m);
  cell[1][0] = 0.0;
  cell[2][0] = 0.0;
  return cell;
}

struct Lcm {
  double l, c, m;
};

/// Per-queue model with one constant-rate regime per distance.
inline IntensityModel model_i_const(int K, int cap, const std::vector<Lcm>& rates,
                                    double tick = 0.01, ModelKind kind = ModelKind::ModelI) {
  IntensityModel mdl;
  mdl.kind = kind;
  mdl.K = K;
  mdl.tick_value = tick;
  mdl.aes.assign(K, 1.0);
  mdl.cap = cap;
  mdl.tables.resize(K);
  for (int d = 1; d <= K; ++d)
    mdl.tables[d - 1] = {const_cell(rates[d - 1].l, rates[d - 1].c, rates[d - 1].m, cap)};
  mdl.validate();
  return mdl;
}

inline StationaryLaw point_law(int atom, int support) {
  StationaryLaw law = StationaryLaw::zeros(support);
  law.ref(atom) = 1.0;
  return law;
}

inline StationaryLaw geometric_law(double rho, int support) {
  StationaryLaw law = StationaryLaw::zeros(support);
  for (int n = 0; n < support; ++n) law.ref(n) = (1.0 - rho) * std::pow(rho, n);
  law.normalize();
  return law;
}

inline LobState uniform_book(int K, int size, int64_t pref_half = 2001) {
  LobState st = LobState::empty(K, pref_half);
  for (int d = 1; d <= K; ++d) {
    st.size_at(QueueIndex(d)) = size;
    st.size_at(QueueIndex(-d)) = size;
  }
  return st;
}

struct RecordedScopes {
  std::vector<EventRecord> per_queue;
  std::vector<EventRecord> pair12;
  std::vector<EventRecord> pair_m11;
  int64_t n_events = 0;
};

/// Event records of an intra-period simulation, with the scope-specific
/// waiting-time and conditioning conventions the estimators expect.
inline RecordedScopes record_scopes(const LobState& initial, const IntensityModel& model,
                                    int64_t max_events, Rng& rng) {
  RecordedScopes out;
  const int K = initial.K;
  std::vector<double> t_queue(2 * K, 0.0);
  std::array<double, 2> t_side{0.0, 0.0};
  double t_m11 = 0.0;

  const EventSink sink = [&](double t, double, const LobState& before, QueueIndex queue,
                             EventType type) {
    ++out.n_events;
    const int d = queue.distance();
    const int side = queue.is_ask() ? 1 : 0;
    const int sgn = queue.is_ask() ? 1 : -1;
    {
      EventRecord e;
      e.dt = t - t_queue[before.index_of(queue)];
      e.queue = queue;
      e.etype = type;
      e.qb1 = before.size_at(queue);
      out.per_queue.push_back(e);
      t_queue[before.index_of(queue)] = t;
    }
    if (d <= 2) {
      EventRecord e;
      e.dt = t - t_side[side];
      e.queue = queue;
      e.etype = type;
      e.qb1 = before.size_at(QueueIndex(sgn));
      e.qb2 = K >= 2 ? before.size_at(QueueIndex(2 * sgn)) : -1;
      out.pair12.push_back(e);
      t_side[side] = t;
    }
    if (d == 1) {
      EventRecord e;
      e.dt = t - t_m11;
      e.queue = queue;
      e.etype = type;
      e.qb1 = before.size_at(QueueIndex(-1));
      e.qb2 = before.size_at(QueueIndex(1));
      out.pair_m11.push_back(e);
      t_m11 = t;
    }
  };
  SimRecording rec;
  rec.mid = false;
  simulate_period(initial, model, 1e18, rng, rec, sink, max_events);
  return out;
}

}  // namespace qrlob::testutil
