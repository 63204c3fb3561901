#include <optional>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "qrlob/core.hpp"
#include "qrlob/errors.hpp"
#include "qrlob/fsio.hpp"
#include "qrlob/ingest.hpp"

using namespace qrlob;
using namespace qrlob::testutil;

namespace {

constexpr auto L = EventType::LimitInsert;
constexpr auto C = EventType::Cancel;
constexpr auto M = EventType::MarketOrder;

std::string synth_csv() { return read_file(fixtures_dir() + "/l2_synth.csv"); }

IngestOptions synth_opt() {
  IngestOptions opt;
  opt.K = 3;
  opt.tick_value = 0.01;
  opt.law_period_s = 2.0;
  opt.has_trades = true;
  return opt;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("reference price sits on the odd half-tick grid") {
  CHECK(estimate_pref_half(2000, 2002, std::nullopt) == 2001);
  CHECK(estimate_pref_half(1998, 2004, std::nullopt) == 2001);
  // Even spread: two odd candidates around the midpoint.
  CHECK(estimate_pref_half(2000, 2004, std::nullopt) == 2001);
  CHECK(estimate_pref_half(2000, 2004, 2005) == 2003);
  CHECK(estimate_pref_half(2000, 2004, 1995) == 2001);
  CHECK(estimate_pref_half(2000, 2004, 2002) == 2001);  // ties favor the lower
  CHECK_THROWS_AS(estimate_pref_half(2002, 2000, std::nullopt), CrossedBook);
  CHECK_THROWS_AS(estimate_pref_half(2000, 2000, std::nullopt), CrossedBook);
}

TEST_CASE("session windows parse as minute ranges") {
  const SessionWindow w = parse_session("09:30-16:00");
  CHECK(w.start_minute == 570);
  CHECK(w.end_minute == 960);
  const SessionWindow off = parse_session("");
  CHECK(off.start_minute == -1);
  CHECK_THROWS_AS(parse_session("9:30-16:00"), InputError);
  CHECK_THROWS_AS(parse_session("09:30 16:00"), InputError);
  CHECK_THROWS_AS(parse_session("12:00-11:00"), InputError);
  CHECK_THROWS_AS(parse_session("25:00-26:00"), InputError);
  CHECK(parse_session("09:30-24:00").end_minute == 1440);
}

TEST_CASE("snapshot parsing rejects malformed rows") {
  IngestOptions opt;
  const std::string head = "ts_ns,bp1,bv1,ap1,av1\n";
  const auto snaps = parse_l2_csv(head + "0,10.00,800,10.01,900\n", opt);
  REQUIRE(snaps.size() == 1);
  CHECK(snaps[0].bids[0].price_half_ticks == 2000);
  CHECK(snaps[0].bids[0].volume == 800);
  CHECK(snaps[0].asks[0].price_half_ticks == 2002);

  CHECK_THROWS_AS(parse_l2_csv("time,bp1,bv1,ap1,av1\n0,10,1,11,1\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "0,10.00,800\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "0,10.003,800,10.01,900\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "0,10.005,800,10.01,900\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "0,10.00,-5,10.01,900\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "5,10.00,800,10.01,900\n4,10.00,800,10.01,900\n", opt),
                  InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "0,10.00,800,,\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv(head + "0,10.00,,10.01,900\n", opt), InputError);
  CHECK_THROWS_AS(parse_l2_csv("ts_ns,bv1,bp1,ap1,av1\n", opt), InputError);

  // Levels out of order within a side.
  const std::string head2 = "ts_ns,bp1,bp2,bv1,bv2,ap1,ap2,av1,av2\n";
  CHECK_THROWS_AS(parse_l2_csv(head2 + "0,10.00,10.01,8,8,10.02,10.03,9,9\n", opt), InputError);
  // A zero-volume level is treated as absent.
  const auto thin = parse_l2_csv(head2 + "0,10.00,9.99,8,0,10.02,,9,\n", opt);
  REQUIRE(thin.size() == 1);
  CHECK(thin[0].bids.size() == 1);
  CHECK(thin[0].asks.size() == 1);

  bool trades = false;
  const auto with_trades =
      parse_l2_csv("ts_ns,bp1,bv1,ap1,av1,trade_px,trade_vol\n0,10.00,8,10.01,9,10.00,250\n", opt,
                   &trades);
  CHECK(trades);
  CHECK(with_trades[0].trade_vol == 250);
  CHECK_THROWS_AS(parse_l2_csv("ts_ns,bp1,bv1,ap1,av1,px,vol\n", opt), InputError);
}

TEST_CASE("average event sizes come from within-epoch volume changes") {
  const IngestOptions opt = synth_opt();
  const auto snaps = parse_l2_csv(synth_csv(), opt);
  REQUIRE(snaps.size() == 11);
  const auto aes = compute_aes(snaps, opt);
  REQUIRE(aes.size() == 3);
  CHECK(aes[0] == 4400.0 / 6.0);
  CHECK(aes[1] == 1000.0);
  CHECK(aes[2] == 1200.0);

  // A lone diff that only touches the first queue starves the deeper ones.
  IngestOptions shallow;
  shallow.K = 2;
  const auto two = parse_l2_csv(
      "ts_ns,bp1,bp2,bv1,bv2,ap1,ap2,av1,av2\n"
      "0,10.00,9.99,800,500,10.01,10.02,900,500\n"
      "1000000000,10.00,9.99,600,500,10.01,10.02,900,500\n",
      shallow);
  CHECK_THROWS_AS(compute_aes(two, shallow), InsufficientData);
  CHECK_THROWS_AS(compute_aes({two[0]}, shallow), InsufficientData);
}

TEST_CASE("the synthetic tape reconstructs to the expected event list") {
  const IngestOptions opt = synth_opt();
  const auto snaps = parse_l2_csv(synth_csv(), opt);
  const auto aes = compute_aes(snaps, opt);
  const IngestResult r = reconstruct_events(snaps, aes, opt);

  CHECK(r.qc.n_snapshots == 11);
  CHECK(r.qc.n_epochs == 2);
  CHECK(r.qc.n_skipped_diffs == 1);
  CHECK(r.qc.n_multi_queue_diffs == 0);
  CHECK(r.qc.n_unclassified == 0);
  CHECK(r.qc.n_events_per_queue == 9);

  REQUIRE(r.pref_path.size() == 11);
  for (size_t i = 0; i < 8; ++i) CHECK(r.pref_path[i].pref_half_ticks == 2001);
  for (size_t i = 8; i < 11; ++i) CHECK(r.pref_path[i].pref_half_ticks == 2003);
  CHECK(r.pref_path[0].ts_ns == 36000000000000);

  const int queues[9] = {1, -1, 2, -3, 1, -2, 1, 1, -1};
  const EventType types[9] = {L, M, C, L, C, C, M, L, C};
  const double dts[9] = {1, 2, 3, 4, 4, 7, 3, 1, 2};
  const int qb1s[9] = {2, 3, 3, 1, 3, 2, 2, 3, 2};
  const int epochs[9] = {0, 0, 0, 0, 0, 0, 0, 1, 1};
  REQUIRE(r.per_queue.size() == 9);
  for (int i = 0; i < 9; ++i) {
    CHECK(r.per_queue[i].queue.value() == queues[i]);
    CHECK(r.per_queue[i].etype == types[i]);
    CHECK(r.per_queue[i].dt == doctest::Approx(dts[i]).epsilon(1e-12));
    CHECK(r.per_queue[i].qb1 == qb1s[i]);
    CHECK(r.per_queue[i].pref_epoch == epochs[i]);
    CHECK(r.per_queue[i].qb2 == -1);
  }

  REQUIRE(r.pair12.size() == 8);
  CHECK(r.pair12[0].qb1 == 2);
  CHECK(r.pair12[0].qb2 == 3);
  CHECK(r.pair12[0].dt == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.pair12[7].queue.value() == -1);
  CHECK(r.pair12[7].qb1 == 2);
  CHECK(r.pair12[7].qb2 == 1);
  CHECK(r.pair12[7].dt == doctest::Approx(2.0).epsilon(1e-12));

  REQUIRE(r.pair_m11.size() == 6);
  CHECK(r.pair_m11[0].qb1 == 3);  // first bid in event units
  CHECK(r.pair_m11[0].qb2 == 2);  // first ask
  CHECK(r.pair_m11[5].qb1 == 2);
  CHECK(r.pair_m11[5].qb2 == 4);
  CHECK(r.pair_m11[5].dt == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(reconstruct_events(snaps, {800.0}, opt), InputError);
}

TEST_CASE("a sweep across two levels reads as sequential market orders") {
  IngestOptions opt;
  opt.K = 2;
  opt.has_trades = true;
  const std::string csv =
      "ts_ns,bp1,bp2,bv1,bv2,ap1,ap2,av1,av2,trade_px,trade_vol\n"
      "0,10.00,,800,,10.01,10.02,800,1000,,0\n"
      "1000000000,10.00,,800,,10.02,,800,,10.01,1000\n"
      "2000000000,10.00,9.99,800,500,10.02,,800,,,500\n";
  const auto snaps = parse_l2_csv(csv, opt);
  const IngestResult r = reconstruct_events(snaps, {800.0, 1000.0}, opt);

  CHECK(r.qc.n_multi_queue_diffs == 1);
  CHECK(r.qc.n_unclassified == 1);  // the last row trades without a book reduction
  REQUIRE(r.per_queue.size() == 3);
  CHECK(r.per_queue[0].queue.value() == 1);
  CHECK(r.per_queue[0].etype == M);
  CHECK(r.per_queue[0].qb1 == 1);
  CHECK(r.per_queue[1].queue.value() == 2);
  CHECK(r.per_queue[1].etype == M);  // best level emptied first, then swept deeper
  CHECK(r.per_queue[1].qb1 == 1);
  CHECK(r.per_queue[1].dt == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.per_queue[2].etype == L);
  CHECK(r.per_queue[2].queue.value() == -2);
  CHECK(r.per_queue[2].qb1 == 0);

  REQUIRE(r.pair12.size() == 3);
  CHECK(r.pair12[0].dt == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.pair12[1].dt == 1e-9);  // same diff, same side: nominal instant
  CHECK(r.pair12[1].qb1 == 0);    // the best queue is already gone
  CHECK(r.pair12[1].qb2 == 1);
}

TEST_CASE("without trade columns a best-quote reduction reads as a market order") {
  IngestOptions opt;
  opt.K = 1;
  opt.has_trades = false;
  const std::string csv =
      "ts_ns,bp1,bv1,ap1,av1\n"
      "0,10.00,800,10.01,900\n"
      "1000000000,10.00,500,10.01,900\n";
  const auto snaps = parse_l2_csv(csv, opt);
  const IngestResult r = reconstruct_events(snaps, {300.0}, opt);
  REQUIRE(r.per_queue.size() == 1);
  CHECK(r.per_queue[0].etype == M);  // best-quote reductions read as market orders
  CHECK(r.qc.n_unclassified == 0);
}

TEST_CASE("a day boundary restarts the reference-price chain") {
  IngestOptions opt;
  opt.K = 1;
  const std::string csv =
      "ts_ns,bp1,bv1,ap1,av1\n"
      "36000000000000,10.02,800,10.03,900\n"
      "122400000000000,10.00,800,10.02,900\n";
  const auto snaps = parse_l2_csv(csv, opt);
  const IngestResult r = reconstruct_events(snaps, {800.0}, opt);
  REQUIRE(r.pref_path.size() == 2);
  CHECK(r.pref_path[0].pref_half_ticks == 2005);
  CHECK(r.pref_path[1].pref_half_ticks == 2001);  // bootstrapped anew, not pulled to 2005
  CHECK(r.qc.n_epochs == 2);
  CHECK(r.qc.n_skipped_diffs == 1);
  CHECK(r.per_queue.empty());
}

TEST_CASE("queue-size laws sample the book on a fixed grid") {
  const IngestOptions opt = synth_opt();
  const auto snaps = parse_l2_csv(synth_csv(), opt);
  const auto aes = compute_aes(snaps, opt);
  const IngestLaws laws = sample_empirical_law(snaps, aes, opt);
  CHECK(laws.n_samples == 5);
  REQUIRE(laws.marginal.size() == 3);
  REQUIRE(laws.marginal[2].shape[0] == 3);
  CHECK(laws.marginal[2].probs[0] == 0.0);
  CHECK(laws.marginal[2].probs[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(laws.marginal[2].probs[2] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(laws.joint12.dims == 2);
  CHECK(laws.joint_m11.dims == 2);
  CHECK(laws.joint_m11.total() == doctest::Approx(1.0).epsilon(1e-12));

  IngestOptions bad = opt;
  bad.law_period_s = 0.0;
  CHECK_THROWS_AS(sample_empirical_law(snaps, aes, bad), InputError);
  bad.law_period_s = 3600.0;
  CHECK_THROWS_AS(sample_empirical_law(snaps, aes, bad), InsufficientData);
}

TEST_CASE("the full pipeline applies the session filter before anything else") {
  IngestOptions opt;
  opt.K = 1;
  opt.law_period_s = 1.0;
  opt.session = parse_session("10:00-10:01");
  const std::string csv =
      "ts_ns,bp1,bv1,ap1,av1\n"
      "36000000000000,10.00,800,10.01,900\n"
      "36002000000000,10.00,500,10.01,900\n"
      "36061000000000,10.00,900,10.01,900\n";
  const auto snaps = parse_l2_csv(csv, opt);
  const IngestResult r = ingest_stream(snaps, opt);
  CHECK(r.qc.n_dropped_session == 1);
  CHECK(r.qc.n_snapshots == 2);
  REQUIRE(r.per_queue.size() == 1);
  CHECK(r.per_queue[0].etype == M);
  CHECK(r.aes == std::vector<double>{300.0});

  IngestOptions night = opt;
  night.session = parse_session("02:00-03:00");
  CHECK_THROWS_AS(ingest_stream(snaps, night), InputError);
}

TEST_CASE("quality counters serialize to json") {
  IngestQc qc;
  qc.n_snapshots = 11;
  qc.n_epochs = 2;
  qc.aes = {733.0, 1000.0};
  const std::string s = dump_ingest_qc_json(qc);
  CHECK(s.find("\"n_snapshots\": 11") != std::string::npos);
  CHECK(s.find("\"aes\"") != std::string::npos);
}

}  // TEST_SUITE
