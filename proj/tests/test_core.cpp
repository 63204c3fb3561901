#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "qrlob/core.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/fsio.hpp"

using namespace qrlob;
using namespace qrlob::testutil;

namespace {

constexpr auto L = EventType::LimitInsert;
constexpr auto C = EventType::Cancel;
constexpr auto M = EventType::MarketOrder;

double flow_rate(const std::vector<Flow>& flows, int queue, EventType t) {
  for (const Flow& f : flows)
    if (f.queue == QueueIndex(queue) && f.type == t) return f.rate;
  return 0.0;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("queue indexing covers both sides") {
  LobState s = LobState::empty(3, 2001);
  REQUIRE(static_cast<int>(s.q.size()) == 6);
  int expected = 0;
  for (int v : {-3, -2, -1, 1, 2, 3}) {
    CHECK(s.index_of(QueueIndex(v)) == expected);
    ++expected;
  }
  s.size_at(QueueIndex(-2)) = 5;
  CHECK(s.q[1] == 5);
  CHECK(QueueIndex(-2).distance() == 2);
  CHECK_FALSE(QueueIndex(-2).is_ask());
  CHECK(QueueIndex(-2).mirrored() == QueueIndex(2));
  CHECK_THROWS_AS(QueueIndex(0), Error);
}

TEST_CASE("midprice conventions") {
  LobState s = uniform_book(3, 1, 2001);
  // Best bid at 2000 half-ticks, best ask at 2002: mid sum is bid + ask.
  CHECK(mid_sum_half_ticks(s) == 2 * 2001);
  CHECK(mid_price(s, 0.01) == doctest::Approx(10.005).epsilon(1e-12));

  s.size_at(QueueIndex(1)) = 0;  // best ask moves one tick out
  CHECK(mid_sum_half_ticks(s) == 2 * 2001 + 2);

  LobState drained = LobState::empty(2, 2001);
  drained.size_at(QueueIndex(-1)) = 1;
  // Empty ask side falls back to distance K + 1.
  CHECK(mid_sum_half_ticks(drained) == 2000 + (2001 + 2 * 3 - 1));
}

TEST_CASE("best queue lookups") {
  LobState s = LobState::empty(3, 2001);
  CHECK_FALSE(best_ask(s).has_value());
  s.size_at(QueueIndex(2)) = 4;
  REQUIRE(best_ask(s).has_value());
  CHECK(*best_ask(s) == QueueIndex(2));
  s.size_at(QueueIndex(-3)) = 1;
  REQUIRE(best_bid(s).has_value());
  CHECK(*best_bid(s) == QueueIndex(-3));
}

TEST_CASE("mirrored swaps the sides") {
  LobState s = LobState::empty(2, 777);
  s.size_at(QueueIndex(-1)) = 3;
  s.size_at(QueueIndex(2)) = 9;
  const LobState m = s.mirrored();
  CHECK(m.size_at(QueueIndex(1)) == 3);
  CHECK(m.size_at(QueueIndex(-2)) == 9);
  CHECK(m.pref_half_ticks == 777);
}

TEST_CASE("model json round trip") {
  const IntensityModel mdl = IntensityModel::load(fixtures_dir() + "/model_iib_synth.json");
  const IntensityModel back = parse_model(dump_model(mdl));
  CHECK(back.kind == mdl.kind);
  CHECK(back.K == mdl.K);
  CHECK(back.cap == mdl.cap);
  CHECK(back.m == mdl.m);
  CHECK(back.l == mdl.l);
  CHECK(back.aes == mdl.aes);
  for (int d = 1; d <= mdl.K; ++d)
    for (int r = 0; r < mdl.regime_count(d); ++r)
      for (int t = 0; t < 3; ++t)
        CHECK(back.tables[d - 1][r][t] == mdl.tables[d - 1][r][t]);
}

TEST_CASE("model validation rejects structural errors") {
  IntensityModel mdl = model_i_const(2, 4, {{1, 2, 1}, {1, 2, 0}});
  mdl.aes = {1.0};
  CHECK_THROWS_AS(mdl.validate(), InputError);

  IntensityModel neg = model_i_const(1, 4, {{1, 2, 1}});
  neg.tables[0][0][0][2] = -0.5;
  CHECK_THROWS_AS(neg.validate(), InputError);

  IntensityModel iib = IntensityModel::load(fixtures_dir() + "/model_iib_synth.json");
  iib.m = 7;  // thresholds must satisfy m < l
  CHECK_THROWS_AS(iib.validate(), InputError);
}

TEST_CASE("opposite-size buckets follow the thresholds") {
  IntensityModel mdl = IntensityModel::load(fixtures_dir() + "/model_iib_synth.json");
  REQUIRE(mdl.m == 2);
  REQUIRE(mdl.l == 5);
  CHECK(mdl.opp_range(0) == kOppEmpty);
  CHECK(mdl.opp_range(1) == kOppSmall);
  CHECK(mdl.opp_range(2) == kOppSmall);
  CHECK(mdl.opp_range(3) == kOppUsual);
  CHECK(mdl.opp_range(5) == kOppUsual);
  CHECK(mdl.opp_range(6) == kOppLarge);
  CHECK(mdl.opp_range(400) == kOppLarge);
}

TEST_CASE("rates clamp at the size cap") {
  IntensityModel mdl = model_i_const(1, 3, {{1, 2, 1}});
  mdl.tables[0][0][0] = {0.1, 0.2, 0.3, 0.4};
  CHECK(mdl.rate(1, 0, L, 0) == 0.1);
  CHECK(mdl.rate(1, 0, L, 3) == 0.4);
  CHECK(mdl.rate(1, 0, L, 50) == 0.4);
  CHECK_THROWS_AS(mdl.rate(1, 5, L, 0), UnknownRegime);
}

TEST_CASE("per-queue flow enumeration") {
  const IntensityModel mdl =
      model_i_const(2, 8, {{1.0, 1.2, 0.8}, {0.9, 1.1, 0.4}});
  LobState s = LobState::empty(2, 2001);
  s.size_at(QueueIndex(1)) = 2;
  s.size_at(QueueIndex(-2)) = 1;

  std::vector<Flow> flows;
  flow_row(s, mdl, flows);

  // Insertions everywhere; removals only where a unit exists.
  CHECK(flow_rate(flows, 1, L) == 1.0);
  CHECK(flow_rate(flows, -1, L) == 1.0);
  CHECK(flow_rate(flows, 2, L) == 0.9);
  CHECK(flow_rate(flows, -2, L) == 0.9);
  CHECK(flow_rate(flows, 1, C) == 1.2);
  CHECK(flow_rate(flows, 1, M) == 0.8);
  CHECK(flow_rate(flows, -1, C) == 0.0);
  CHECK(flow_rate(flows, -1, M) == 0.0);
  CHECK(flow_rate(flows, -2, C) == 1.1);
  CHECK(flow_rate(flows, -2, M) == 0.4);
  CHECK(flow_rate(flows, 2, C) == 0.0);
}

TEST_CASE("first-queue switching routes market orders") {
  const IntensityModel mdl = IntensityModel::load(fixtures_dir() + "/model_iia_synth.json");
  LobState s = LobState::empty(3, 2001);
  s.size_at(QueueIndex(1)) = 2;   // ask side first queue occupied
  s.size_at(QueueIndex(2)) = 3;
  s.size_at(QueueIndex(-2)) = 3;  // bid side first queue empty
  std::vector<Flow> flows;
  flow_row(s, mdl, flows);

  // Occupied first queue: market orders stay at distance 1, the second queue
  // runs in its q1>0 regime (no market orders there).
  CHECK(flow_rate(flows, 1, M) == 0.8);
  CHECK(flow_rate(flows, 2, M) == 0.0);
  CHECK(flow_rate(flows, 2, C) == 0.9);
  CHECK(flow_rate(flows, 2, L) == 0.7);
  // Empty first queue: its own removals vanish and market orders reach the
  // second queue.
  CHECK(flow_rate(flows, -1, M) == 0.0);
  CHECK(flow_rate(flows, -2, M) == 0.3);
  CHECK(flow_rate(flows, -2, C) == 0.7);
  CHECK(flow_rate(flows, -2, L) == 0.5);
}

TEST_CASE("opposite-queue buckets pick the first-queue column") {
  const IntensityModel mdl = IntensityModel::load(fixtures_dir() + "/model_iib_synth.json");
  LobState s = LobState::empty(3, 2001);
  s.size_at(QueueIndex(1)) = 2;
  s.size_at(QueueIndex(-1)) = 7;  // ask sees a large opposite queue
  std::vector<Flow> flows;
  flow_row(s, mdl, flows);
  // Ask first queue reads the opp=large column, bid reads opp=small (2).
  CHECK(flow_rate(flows, 1, L) == 1.2);
  CHECK(flow_rate(flows, 1, C) == 1.3);
  CHECK(flow_rate(flows, 1, M) == 0.6);
  CHECK(flow_rate(flows, -1, L) == 0.9);
  CHECK(flow_rate(flows, -1, C) == 1.1);
  CHECK(flow_rate(flows, -1, M) == 0.9);
}

TEST_CASE("generator row merges removals and conserves rates") {
  const IntensityModel mdl =
      model_i_const(2, 8, {{1.0, 1.2, 0.8}, {0.9, 1.1, 0.4}});
  LobState s = uniform_book(2, 2);
  std::vector<Flow> flows;
  flow_row(s, mdl, flows);
  const auto transitions = generator_row(s, mdl);

  std::map<int, double> up, down;
  for (const Transition& tr : transitions) {
    REQUIRE((tr.direction == 1 || tr.direction == -1));
    (tr.direction == 1 ? up : down)[tr.queue.value()] += tr.rate;
  }
  for (int v : {-2, -1, 1, 2}) {
    CHECK(up[v] == doctest::Approx(flow_rate(flows, v, L)).epsilon(1e-15));
    CHECK(down[v] ==
          doctest::Approx(flow_rate(flows, v, C) + flow_rate(flows, v, M)).epsilon(1e-15));
  }
}

TEST_CASE("stability check accepts the synthetic fixture") {
  const IntensityModel mdl = IntensityModel::load(fixtures_dir() + "/model_i_synth.json");
  const ErgodicityReport rep = check_ergodicity_assumptions(mdl, mdl.cap);
  CHECK(rep.ok);
  CHECK(rep.delta > 0);
  CHECK(rep.h > 0);
  // Tightest drift margin: distance 2 with death 1.5 against birth 0.9.
  CHECK(rep.delta == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("stability check flags upward drift") {
  const IntensityModel bad = model_i_const(1, 6, {{2.0, 0.5, 0.5}});
  const ErgodicityReport rep = check_ergodicity_assumptions(bad, 6);
  CHECK_FALSE(rep.ok);
  CHECK(rep.delta < 0);
  CHECK_FALSE(smallest_stable_bound(bad).has_value());
}

TEST_CASE("smallest stable bound skips the unstable small sizes") {
  // Births win below size 3, deaths win from size 3 on.
  IntensityModel mdl = model_i_const(1, 6, {{1.0, 0.2, 0.2}});
  auto& cell = mdl.tables[0][0];
  for (int s = 3; s <= 6; ++s) {
    cell[1][s] = 1.5;
    cell[2][s] = 0.5;
  }
  CHECK_FALSE(check_ergodicity_assumptions(mdl, 1).ok);
  const auto bound = smallest_stable_bound(mdl);
  REQUIRE(bound.has_value());
  CHECK(check_ergodicity_assumptions(mdl, *bound).ok);
  CHECK(*bound >= 2);
}

TEST_CASE("event codes round trip") {
  for (EventType t : {L, C, M}) CHECK(event_from_code(event_code(t)) == t);
  for (ModelKind k : {ModelKind::ModelI, ModelKind::ModelIIa, ModelKind::ModelIIb,
                      ModelKind::PoissonBaseline})
    CHECK(model_kind_from_code(model_kind_code(k)) == k);
}

}  // TEST_SUITE
