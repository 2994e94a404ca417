#!/usr/bin/env python3
"""Recompute drift metrics of a run directory from truth.csv and estimate.csv.

Exits 0 when every recomputed value matches metrics.csv within the tolerance,
1 on a mismatch and 2 when files are missing or malformed.
"""

import argparse
import csv
import math
import sys
from pathlib import Path

CHECKED = (
    "distance_m",
    "max_position_error_m",
    "final_position_error_m",
    "max_error_percent",
    "final_error_percent",
)


def read_rows(path):
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


def position(row):
    return (row["p_x"], row["p_y"], row["p_z"])


def recompute(run_dir):
    truth = read_rows(run_dir / "truth.csv")
    est = read_rows(run_dir / "estimate.csv")
    if len(truth) != len(est) or not truth:
        raise ValueError("truth.csv and estimate.csv must have the same non-zero row count")
    for a, b in zip(truth, est):
        if a["t"] != b["t"]:
            raise ValueError(f"time stamps differ: {a['t']} vs {b['t']}")
    distance = sum(math.dist(position(a), position(b)) for a, b in zip(truth, truth[1:]))
    errors = [math.dist(position(a), position(b)) for a, b in zip(truth, est)]
    out = {
        "distance_m": distance,
        "max_position_error_m": max(errors),
        "final_position_error_m": errors[-1],
    }
    pct = (lambda e: 100.0 * e / distance) if distance > 0 else (lambda e: math.nan)
    out["max_error_percent"] = pct(out["max_position_error_m"])
    out["final_error_percent"] = pct(out["final_position_error_m"])
    return out


def reported(run_dir):
    with open(run_dir / "metrics.csv", newline="") as f:
        return {row["metric"]: float(row["value"]) for row in csv.DictReader(f)}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dir", type=Path, help="directory written by 'rvio run'")
    parser.add_argument("--tolerance", type=float, default=1e-9)
    args = parser.parse_args(argv)
    try:
        mine = recompute(args.run_dir)
        theirs = reported(args.run_dir)
    except (OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    ok = True
    for key in CHECKED:
        a, b = mine[key], theirs.get(key, math.nan)
        same = (math.isnan(a) and math.isnan(b)) or abs(a - b) <= args.tolerance
        ok &= same
        print(f"{key:24s} recomputed {a:.12g}  reported {b:.12g}  {'ok' if same else 'MISMATCH'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
