#!/usr/bin/env python3
"""Regenerates the synthetic L2 tape and its expected readings.

The tape is small enough to audit line by line. A reference price of 2001
half-ticks (10.005) holds through row 7; the bid improvement in row 8 moves
it to 2003 and starts a second epoch. The expected AES, event counts and
reference-price path in l2_synth_expected.json are recomputed here with
independent logic.
"""
import json
import math
import pathlib

TICK = 0.01
K = 3
T0 = 10 * 3600 * 10**9  # 10:00:00 UTC in ns


def px(p):
    return f"{p:.2f}"


# (dt_s, bids, asks, trade_px, trade_vol); levels are (price, volume), best first.
ROWS = [
    (0, [(10.00, 1600), (9.99, 2000), (9.98, 1200)],
        [(10.01, 800), (10.02, 3000), (10.03, 2400)], None, 0),
    (1, [(10.00, 1600), (9.99, 2000), (9.98, 1200)],
        [(10.01, 1600), (10.02, 3000), (10.03, 2400)], None, 0),
    (2, [(10.00, 800), (9.99, 2000), (9.98, 1200)],
        [(10.01, 1600), (10.02, 3000), (10.03, 2400)], 10.00, 800),
    (3, [(10.00, 800), (9.99, 2000), (9.98, 1200)],
        [(10.01, 1600), (10.02, 2000), (10.03, 2400)], None, 0),
    (4, [(10.00, 800), (9.99, 2000), (9.98, 2400)],
        [(10.01, 1600), (10.02, 2000), (10.03, 2400)], None, 0),
    (5, [(10.00, 800), (9.99, 2000), (9.98, 2400)],
        [(10.01, 800), (10.02, 2000), (10.03, 2400)], None, 0),
    (7, [(10.00, 800), (9.99, 1000), (9.98, 2400)],
        [(10.01, 800), (10.02, 2000), (10.03, 2400)], None, 0),
    (8, [(10.00, 800), (9.99, 1000), (9.98, 2400)],
        [(10.02, 2000), (10.03, 2400), (10.04, 1000)], 10.01, 800),
    (9, [(10.01, 1200), (10.00, 800), (9.99, 1000)],
        [(10.02, 2000), (10.03, 2400), (10.04, 1000)], None, 0),
    (10, [(10.01, 1200), (10.00, 800), (9.99, 1000)],
         [(10.02, 2600), (10.03, 2400), (10.04, 1000)], None, 0),
    (11, [(10.01, 600), (10.00, 800), (9.99, 1000)],
         [(10.02, 2600), (10.03, 2400), (10.04, 1000)], None, 0),
]


def half(p):
    return round(p / (TICK / 2))


def pref_of(bid, ask, prev):
    b, a = half(bid), half(ask)
    spread_ticks = (a - b) // 2
    mid2 = (a + b) // 2
    if spread_ticks % 2 == 1:
        return mid2
    if prev is None:
        return mid2 - 1
    lo, hi = mid2 - 1, mid2 + 1
    return lo if abs(lo - prev) <= abs(hi - prev) else hi


def volumes_by_queue(levels, pref, is_bid):
    out = {}
    for p, v in levels:
        h = half(p)
        twice = (pref - h if is_bid else h - pref) + 1
        if twice < 2 or twice % 2 != 0:
            continue
        d = twice // 2
        if d > K:
            continue
        out[d] = out.get(d, 0) + v
    return out


def main():
    root = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
    root.mkdir(exist_ok=True)

    header = ["ts_ns"]
    header += [f"bp{i}" for i in range(1, K + 1)] + [f"bv{i}" for i in range(1, K + 1)]
    header += [f"ap{i}" for i in range(1, K + 1)] + [f"av{i}" for i in range(1, K + 1)]
    header += ["trade_px", "trade_vol"]
    lines = [",".join(header)]
    for dt, bids, asks, tpx, tvol in ROWS:
        f = [str(T0 + dt * 10**9)]
        f += [px(p) for p, _ in bids] + [str(v) for _, v in bids]
        f += [px(p) for p, _ in asks] + [str(v) for _, v in asks]
        f += [px(tpx) if tpx is not None else "", str(tvol)]
        lines.append(",".join(f))
    (root / "l2_synth.csv").write_text("\n".join(lines) + "\n")

    # Expected readings, recomputed from the rows.
    prefs = []
    prev = None
    for _, bids, asks, _, _ in ROWS:
        prev = pref_of(bids[0][0], asks[0][0], prev)
        prefs.append(prev)

    diffs_abs = {d: [] for d in range(1, K + 1)}
    counts = {"L": 0, "C": 0, "M": 0}
    by_distance = {d: 0 for d in range(1, K + 1)}
    n_epochs = 1
    n_skipped = 0
    for i in range(1, len(ROWS)):
        if prefs[i] != prefs[i - 1]:
            n_epochs += 1
            n_skipped += 1
            continue
        pref = prefs[i - 1]
        _, bids0, asks0, _, _ = ROWS[i - 1]
        _, bids1, asks1, _, tvol = ROWS[i]
        for is_bid, lv0, lv1 in [(True, bids0, bids1), (False, asks0, asks1)]:
            q0 = volumes_by_queue(lv0, pref, is_bid)
            q1 = volumes_by_queue(lv1, pref, is_bid)
            best = min(q0.keys()) if q0 else None
            for d in sorted(set(q0) | set(q1)):
                delta = q1.get(d, 0) - q0.get(d, 0)
                if delta == 0:
                    continue
                diffs_abs[d].append(abs(delta))
                by_distance[d] += 1
                if delta > 0:
                    counts["L"] += 1
                elif d == best and tvol > 0:
                    counts["M"] += 1
                else:
                    counts["C"] += 1

    aes = {d: sum(v) / len(v) for d, v in diffs_abs.items()}
    expected = {
        "aes": [aes[d] for d in range(1, K + 1)],
        "n_snapshots": len(ROWS),
        "n_epochs": n_epochs,
        "n_skipped_diffs": n_skipped,
        "n_events_per_queue": sum(counts.values()),
        "counts_by_type": counts,
        "counts_by_distance": {str(d): by_distance[d] for d in range(1, K + 1)},
        "pref_half_ticks": prefs,
    }
    (root / "l2_synth_expected.json").write_text(
        json.dumps(expected, indent=2, sort_keys=True) + "\n")
    print("wrote", root / "l2_synth.csv")
    print("wrote", root / "l2_synth_expected.json")
    print(json.dumps(expected, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
