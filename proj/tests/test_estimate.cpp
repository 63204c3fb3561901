#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "qrlob/core.hpp"
#include "qrlob/csv.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/estimate.hpp"
#include "qrlob/law.hpp"
#include "qrlob/rng.hpp"

using namespace qrlob;
using namespace qrlob::testutil;

namespace {

constexpr auto L = EventType::LimitInsert;
constexpr auto C = EventType::Cancel;
constexpr auto M = EventType::MarketOrder;

EventRecord rec(int queue, double dt, EventType t, int qb1, int qb2 = -1) {
  EventRecord e;
  e.dt = dt;
  e.queue = QueueIndex(queue);
  e.etype = t;
  e.qb1 = qb1;
  e.qb2 = qb2;
  return e;
}

const CellEstimate& find_cell(const EstimationResult& r, int distance, int regime, int size,
                              EventType t) {
  for (const CellEstimate& c : r.cells)
    if (c.distance == distance && c.regime == regime && c.size == size && c.etype == t) return c;
  REQUIRE(false);
  return r.cells.front();
}

}  // namespace

TEST_SUITE("estimate") {

TEST_CASE("per-queue rates are event counts over exposure time") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const std::vector<EventRecord> events = {rec(1, 2.0, L, 1), rec(1, 2.0, C, 1),
                                           rec(-1, 2.0, L, 1)};
  const EstimationResult r = estimate_model_I(events, opt);
  CHECK(r.model.kind == ModelKind::ModelI);
  CHECK(r.model.K == 1);
  CHECK(r.model.rate(1, 0, L, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, M, 1) == 0.0);
  // Unobserved sizes inherit the nearest populated size's rates.
  CHECK(r.model.rate(1, 0, C, 17) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, L, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 0) == 0.0);
  CHECK(r.model.rate(1, 0, M, 0) == 0.0);
  CHECK(r.qc.n_events == 3);
  CHECK(r.qc.n_rejected == 0);
  CHECK(r.qc.n_filled_cells == 30);
  CHECK(r.qc.empty_regimes.empty());

  const CellEstimate& cell = find_cell(r, 1, 0, 1, C);
  CHECK(cell.rate == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(cell.n_obs == 3);
  CHECK_FALSE(cell.filled);
}

TEST_CASE("sparse sizes inherit the nearest populated size, ties to the smaller") {
  EstimateOptions opt;
  opt.n_obs_floor = 2;
  const std::vector<EventRecord> events = {
      rec(1, 1.0, L, 2),   rec(1, 1.0, L, 2),   rec(1, 1.0, C, 2),
      rec(-1, 0.5, C, 6),  rec(-1, 0.5, C, 6),  rec(1, 1.0, M, 4),
  };
  const EstimationResult r = estimate_model_I(events, opt);
  // Size 2: own data. Size 6: own data. Size 4 ties between them: the smaller wins.
  CHECK(r.model.rate(1, 0, L, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 6) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, L, 4) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, M, 4) == 0.0);
  CHECK(r.model.rate(1, 0, C, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 5) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 30) == doctest::Approx(2.0).epsilon(1e-15));

  // The thin cell still reports its own evidence.
  const CellEstimate& own = find_cell(r, 1, 0, 4, M);
  CHECK(own.rate == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(own.n_obs == 1);
  CHECK(own.filled);
  CHECK(r.qc.n_filled_cells == 29);
}

TEST_CASE("impossible and malformed records are rejected, not silently used") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const std::vector<EventRecord> events = {
      rec(1, 1.0, L, 2),  rec(1, 0.0, L, 2),   rec(1, -1.0, C, 2),
      rec(1, 1.0, C, 0),  rec(1, 1.0, M, 0),   rec(1, 1.0, L, -1),
  };
  const EstimationResult r = estimate_model_I(events, opt);
  CHECK(r.qc.n_events == 6);
  CHECK(r.qc.n_rejected == 5);

  EstimateOptions shallow;
  shallow.n_obs_floor = 1;
  shallow.K = 1;
  const EstimationResult r2 = estimate_model_I({rec(1, 1.0, L, 2), rec(2, 1.0, L, 2)}, shallow);
  CHECK(r2.model.K == 1);
  CHECK(r2.qc.n_rejected == 1);

  CHECK_THROWS_AS(estimate_model_I({}, opt), NoData);
  CHECK_THROWS_AS(estimate_model_I({rec(17, 1.0, L, 2)}, opt), InputError);
}

TEST_CASE("a distance with no events at all is reported empty") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const EstimationResult r = estimate_model_I({rec(2, 1.0, L, 3)}, opt);
  CHECK(r.model.K == 2);
  CHECK(r.model.rate(1, 0, L, 3) == 0.0);
  CHECK(r.model.rate(2, 0, L, 3) == doctest::Approx(1.0).epsilon(1e-15));
  REQUIRE(r.qc.empty_regimes.size() == 1);
  CHECK(r.qc.empty_regimes[0] == "d=1 regime=all");
}

TEST_CASE("interval endpoints multiply the rate and proportion bounds") {
  const RateInterval ci = confidence_interval(2.0, 0.5, 100);
  CHECK(ci.low == doctest::Approx(0.646416).epsilon(1e-12));
  CHECK(ci.high == doctest::Approx(1.430416).epsilon(1e-12));

  const RateInterval all = confidence_interval(1.0, 1.0, 400);
  CHECK(all.low == doctest::Approx(1.0 - 1.96 / 20.0).epsilon(1e-12));
  CHECK(all.high == doctest::Approx(1.0 + 1.96 / 20.0).epsilon(1e-12));

  const RateInterval none = confidence_interval(1.0, 0.0, 4);
  CHECK(none.low == 0.0);
  CHECK(none.high == 0.0);

  CHECK_THROWS_AS(confidence_interval(1.0, 0.5, 0), InputError);
}

TEST_CASE("first-queue occupancy switches the second-queue rates") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const std::vector<EventRecord> pair12 = {
      rec(2, 1.0, C, 0, 2),   // second-queue cancel while the first is empty
      rec(2, 1.0, M, 3, 2),   // market order past an occupied first queue: impossible
      rec(1, 2.0, L, 1, 4),   // first-queue event; exposes the occupied regime
      rec(2, 0.5, L, 2, 0),   // insert into an empty second queue
  };
  const EstimationResult r = estimate_model_IIa(pair12, opt);
  CHECK(r.model.kind == ModelKind::ModelIIa);
  CHECK(r.model.K == 2);
  CHECK(r.qc.n_events == 4);
  CHECK(r.qc.n_rejected == 1);
  CHECK(r.model.rate(1, 0, L, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, L, 7) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.model.rate(2, 0, C, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.model.rate(2, 1, L, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.model.rate(2, 1, L, 9) == doctest::Approx(2.0).epsilon(1e-15));
  for (int s = 0; s <= 30; ++s) CHECK(r.model.rate(2, 1, M, s) == 0.0);
}

TEST_CASE("deeper queues come from the per-queue scope without market orders") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const std::vector<EventRecord> pair12 = {rec(1, 1.0, L, 1, 1)};
  const std::vector<EventRecord> tail = {
      rec(3, 1.0, L, 2),
      rec(3, 1.0, M, 2),   // market orders never reach the third queue
      rec(2, 1.0, L, 1),   // pair-scope distances are not the tail's business
  };
  const EstimationResult r = estimate_model_IIa(pair12, opt, tail);
  CHECK(r.model.K == 3);
  CHECK(r.model.rate(3, 0, L, 5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.model.rate(3, 0, M, 5) == 0.0);
  CHECK(r.qc.n_events == 3);  // the distance-2 tail record is not in scope
  CHECK(r.qc.n_rejected == 1);
}

TEST_CASE("threshold quantiles cut the positive sizes into thirds") {
  StationaryLaw law = StationaryLaw::zeros(10);
  law.ref(0) = 0.1;
  for (int s = 1; s <= 9; ++s) law.ref(s) = 0.1;
  law.normalize();
  const RegimeThresholds th = compute_thresholds(law);
  CHECK(th.m == 3);
  CHECK(th.l == 6);

  CHECK_THROWS_AS(compute_thresholds(point_law(0, 4)), DegenerateLaw);
  CHECK_THROWS_AS(compute_thresholds(point_law(1, 4)), DegenerateLaw);
  StationaryLaw joint = StationaryLaw::zeros(2, 2);
  joint.ref(0, 0) = 1.0;
  CHECK_THROWS_AS(compute_thresholds(joint), InputError);
}

TEST_CASE("opposite-queue ranges key the first-queue rates on both sides") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  RegimeThresholds th{2, 5};
  const std::vector<EventRecord> pair_m11 = {
      rec(-1, 1.0, C, 2, 3),  // bid cancel: own range usual, opposite range small
      rec(1, 2.0, L, 0, 4),   // ask insert opposite an empty bid
      rec(1, 1.0, M, 0, 2),   // market order at the ask, bid empty
  };
  const std::vector<EventRecord> pair12 = {rec(2, 1.0, C, 1, 3)};
  const EstimationResult r = estimate_model_IIb(pair_m11, pair12, th, opt);
  CHECK(r.model.kind == ModelKind::ModelIIb);
  CHECK(r.model.m == 2);
  CHECK(r.model.l == 5);

  CHECK(r.model.rate(1, kOppUsual, C, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.model.rate(1, kOppUsual, L, 0) == 0.0);
  CHECK(r.model.rate(1, kOppEmpty, L, 4) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.model.rate(1, kOppEmpty, M, 2) == doctest::Approx(1.0).epsilon(1e-15));
  // Size 3 ties between donors 2 and 4: the smaller donor's rates win.
  CHECK(r.model.rate(1, kOppEmpty, M, 3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.model.rate(1, kOppEmpty, L, 3) == 0.0);
  CHECK(r.model.rate(2, 1, C, 3) == doctest::Approx(1.0).epsilon(1e-15));

  // The small range saw exposure but no events; the large range saw nothing.
  int n_small = 0, n_large = 0;
  for (const std::string& s : r.qc.empty_regimes) {
    if (s == "d=1 regime=opp=small") ++n_small;
    if (s == "d=1 regime=opp=large") ++n_large;
  }
  CHECK(n_small == 1);
  CHECK(n_large == 1);
  for (int s = 0; s <= 30; ++s) CHECK(r.model.rate(1, kOppSmall, C, s) == 0.0);

  CHECK_THROWS_AS(estimate_model_IIb(pair_m11, pair12, RegimeThresholds{0, 3}, opt), InputError);
  CHECK_THROWS_AS(estimate_model_IIb(pair_m11, pair12, RegimeThresholds{3, 3}, opt), InputError);
}

TEST_CASE("pooled fit: flat arrivals, linear cancellations") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const std::vector<EventRecord> events = {rec(1, 1.0, C, 2), rec(-1, 1.0, C, 2),
                                           rec(1, 2.0, L, 1)};
  const EstimationResult r = estimate_poisson_baseline(events, opt);
  CHECK(r.model.kind == ModelKind::PoissonBaseline);
  CHECK(r.model.rate(1, 0, L, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, L, 17) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 6) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.model.rate(1, 0, C, 0) == 0.0);
  CHECK(r.model.rate(1, 0, M, 5) == 0.0);

  REQUIRE(r.cells.size() == 3);
  for (const CellEstimate& c : r.cells) CHECK(c.size == -1);
  const CellEstimate& slope = find_cell(r, 1, 0, -1, C);
  CHECK(slope.rate == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(slope.ci_low == 0.0);
  CHECK(slope.ci_high == doctest::Approx((1.0 / 3.0) * (1.0 + 1.96 / std::sqrt(2.0))).epsilon(1e-12));
  CHECK(slope.n_obs == 2);
}

TEST_CASE("event records survive the csv round trip") {
  std::vector<EventRecord> events = {rec(1, 0.125, L, 3, 2), rec(-2, 2.5, C, 0, 7),
                                     rec(1, 1e-9, M, 4)};
  events[0].pref_epoch = 2;
  const std::string text = dump_events_csv(events, Scope::Pair12);
  Scope scope = Scope::PerQueue;
  const std::vector<EventRecord> back = parse_events_csv(text, &scope);
  CHECK(scope == Scope::Pair12);
  REQUIRE(back.size() == events.size());
  for (size_t i = 0; i < events.size(); ++i) {
    CHECK(back[i].pref_epoch == events[i].pref_epoch);
    CHECK(back[i].dt == events[i].dt);
    CHECK(back[i].queue == events[i].queue);
    CHECK(back[i].etype == events[i].etype);
    CHECK(back[i].qb1 == events[i].qb1);
    CHECK(back[i].qb2 == events[i].qb2);
  }
  CHECK(text.substr(0, 13) == "scope,pair12\n");

  CHECK_THROWS_AS(parse_events_csv("", nullptr), InputError);
  CHECK_THROWS_AS(parse_events_csv("scope,what\npref_epoch,dt_s,queue,etype,qb1,qb2\n", nullptr),
                  InputError);
  CHECK_THROWS_AS(
      parse_events_csv("scope,per_queue\npref_epoch,dt_s,queue,etype,qb1,qb2\n1,2,3\n", nullptr),
      InputError);
}

TEST_CASE("interval table lists one row per estimated cell") {
  EstimateOptions opt;
  opt.n_obs_floor = 1;
  const EstimationResult r = estimate_model_I({rec(1, 2.0, L, 1)}, opt);
  const std::string text = dump_ci_csv(r);
  const auto rows = csv::lines(text);
  REQUIRE(rows.size() == 4);  // header + three event types at size 1
  CHECK(rows[0] == "queue,regime,size,etype,rate,ci_low,ci_high,n_obs");
  CHECK(rows[1].substr(0, 8) == "1,all,1,");
}

TEST_CASE("rates estimated from a simulated path recover the generator") {
  const IntensityModel truth = model_i_const(1, 10, {{1.0, 1.2, 0.3}});
  Rng rng(2024, 0);
  const RecordedScopes scopes = record_scopes(uniform_book(1, 2), truth, 30000, rng);
  CHECK(scopes.n_events == 30000);

  EstimateOptions opt;
  opt.c_max = 10;
  opt.n_obs_floor = 10;
  const EstimationResult r = estimate_model_I(scopes.per_queue, opt);
  CHECK(r.qc.n_rejected == 0);
  for (int s = 1; s <= 4; ++s) {
    CHECK(r.model.rate(1, 0, L, s) == doctest::Approx(1.0).epsilon(0.10));
    CHECK(r.model.rate(1, 0, C, s) == doctest::Approx(1.2).epsilon(0.10));
    CHECK(r.model.rate(1, 0, M, s) == doctest::Approx(0.3).epsilon(0.25));
  }
  CHECK(r.model.rate(1, 0, L, 0) == doctest::Approx(1.0).epsilon(0.10));
}

}  // TEST_SUITE
