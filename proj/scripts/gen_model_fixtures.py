#!/usr/bin/env python3
"""Regenerates the synthetic model fixtures under fixtures/.

Each model keeps every rate constant in the queue size, so the per-queue
invariant laws are geometric and the stability margin is easy to audit:
every death rate exceeds the matching birth rate.
"""
import json
import pathlib

CAP = 30
K = 3
TICK = 0.01
AES = [800.0, 1000.0, 1200.0]


def row(value, zero_at_empty=False):
    v = [value] * (CAP + 1)
    if zero_at_empty:
        v[0] = 0.0
    return v


def cell(l, c, m):
    return {"L": row(l), "C": row(c, True), "M": row(m, True)}


def model_i():
    return {
        "kind": "model_i",
        "K": K,
        "tick_value": TICK,
        "aes": AES,
        "cap": CAP,
        "m": 0,
        "l": 0,
        "tables": {
            "1": {"all": cell(1.0, 1.2, 0.8)},   # rho = 0.5
            "2": {"all": cell(0.9, 1.1, 0.4)},   # rho = 0.6
            "3": {"all": cell(0.6, 1.0, 0.2)},   # rho = 0.5
        },
    }


def model_iia():
    return {
        "kind": "model_iia",
        "K": K,
        "tick_value": TICK,
        "aes": AES,
        "cap": CAP,
        "m": 0,
        "l": 0,
        "tables": {
            "1": {"all": cell(1.0, 1.2, 0.8)},
            "2": {
                "q1=0": cell(0.5, 0.7, 0.3),
                "q1>0": cell(0.7, 0.9, 0.0),
            },
            "3": {"all": cell(0.6, 1.2, 0.0)},
        },
    }


def model_iib():
    return {
        "kind": "model_iib",
        "K": K,
        "tick_value": TICK,
        "aes": AES,
        "cap": CAP,
        "m": 2,
        "l": 5,
        "tables": {
            "1": {
                "opp=0": cell(0.6, 1.0, 1.2),
                "opp=small": cell(0.9, 1.1, 0.9),
                "opp=usual": cell(1.0, 1.2, 0.8),
                "opp=large": cell(1.2, 1.3, 0.6),
            },
            "2": {
                "q1=0": cell(0.5, 0.7, 0.3),
                "q1>0": cell(0.7, 0.9, 0.0),
            },
            "3": {"all": cell(0.6, 1.2, 0.0)},
        },
    }


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
    out.mkdir(exist_ok=True)
    for name, build in [
        ("model_i_synth", model_i),
        ("model_iia_synth", model_iia),
        ("model_iib_synth", model_iib),
    ]:
        path = out / f"{name}.json"
        path.write_text(json.dumps(build(), indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
