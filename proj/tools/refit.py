#!/usr/bin/env python3
"""Recompute the rate fits of a report directory from metrics.csv and compare
them with the fits recorded in summary.json."""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np


def abscissa(kind, eps):
    if kind == "eps":
        return eps
    if kind == "sqrt_eps":
        return math.sqrt(eps)
    if kind == "eps_sqrt_log":
        return eps * math.sqrt(abs(math.log(eps)) + 1.0)
    raise ValueError(f"unknown abscissa {kind!r}")


def final_values(rows, metric):
    # Value at the largest t per epsilon.
    best = {}
    for r in rows:
        if r["metric"] != metric:
            continue
        eps, t, v = float(r["eps"]), float(r["t"]), float(r["value"])
        if eps not in best or t >= best[eps][0]:
            best[eps] = (t, v)
    return {e: tv[1] for e, tv in best.items()}


def refit(pairs, kind):
    pts = [(e, v) for e, v in pairs if e > 0 and v > 0 and math.isfinite(v)]
    if len(pts) < 3:
        return None
    x = np.log([abscissa(kind, e) for e, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return slope, intercept


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("report_dir", type=Path)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    summary = json.loads((args.report_dir / "summary.json").read_text())
    with open(args.report_dir / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))

    failures = 0
    for fit in summary.get("fits", []):
        name = fit["name"]
        vals = final_values(rows, fit["metric"])
        recorded = list(zip(fit["eps"], fit["values"]))
        for e, v in recorded:
            got = vals.get(e)
            if got is None or not math.isclose(got, v, rel_tol=1e-12, abs_tol=1e-300):
                print(f"FAIL {name}: value at eps={e} is {got} in metrics.csv, {v} in summary.json")
                failures += 1
        res = refit(recorded, fit["abscissa"])
        if res is None:
            if fit["ok"]:
                print(f"FAIL {name}: summary has a fit but fewer than 3 usable points")
                failures += 1
            continue
        slope, intercept = res
        if abs(slope - fit["slope"]) > args.tol or abs(intercept - fit["intercept"]) > args.tol:
            print(f"FAIL {name}: refit slope {slope:.12g} vs {fit['slope']:.12g}")
            failures += 1
        else:
            print(f"ok   {name}: slope {slope:.6g}")

    if not summary.get("fits"):
        print("no fits recorded")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
