"""Compare the numba and pure-numpy kernel backends.

Run with no arguments: the script re-executes itself once per backend (the
backend is fixed at import time by FRAGSERVE_NO_NUMBA, so each needs a fresh
interpreter) and prints a side-by-side table.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""
from __future__ import annotations

import argparse
import json
import os
import random
import subprocess
import sys
import time

import numpy as np


def _grid(batch_max=16, weight=6.0, c0=1.0, c1=0.25, kappa=0.9):
    """The (share, batch, latency) grid min_resource filters, at real shape."""
    shares = np.repeat(np.arange(1, 101, dtype=np.int64), batch_max)
    batches = np.tile(np.arange(1, batch_max + 1, dtype=np.int64), 100)
    lats = weight * (c0 + c1 * (batches - 1)) * (100.0 / shares) ** kappa
    return shares, batches, lats


def _time(fn, repeats):
    fn()  # warm up (JIT compile / cache load)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def run_benchmarks(repeats: int) -> dict:
    from fragserve.kernels import BACKEND, alloc_curve_arrays, pareto_keep

    shares, batches, lats = _grid()
    results = {}

    def bench_pareto():
        for _ in range(100):
            pareto_keep(shares, batches, lats)

    results["pareto_keep x100 (grid 1600)"] = _time(bench_pareto, repeats)

    keep = pareto_keep(shares, batches, lats)
    fs, fb, fl = shares[keep], batches[keep], lats[keep]
    order = np.argsort(fl, kind="stable")
    fs, fb, fl = fs[order], fb[order], fl[order]

    def bench_curve():
        for d in range(1, 501):
            alloc_curve_arrays(fl, fs, fb, float(d), -1, 100)

    results[f"alloc_curve x500 (frontier {len(fl)})"] = _time(bench_curve, repeats)

    from fragserve import Fragment, plan_realigned
    from fragserve.profiles import LayerSpec, ModelSpec, SyntheticCostModel

    rng = random.Random(7)
    layers = tuple(LayerSpec(round(0.5 + rng.random(), 4), rng.randrange(500, 9000))
                   for _ in range(12))
    model = ModelSpec("m", 2000, layers)
    cost = SyntheticCostModel({"m": model}, batch_max=16)
    frags = [
        Fragment(f"f{i}", "m", rng.randrange(0, 12), float(rng.randrange(60, 121)),
                 float(rng.randrange(2, 31)), frozenset({f"f{i}"}))
        for i in range(200)
    ]

    def bench_plan():
        plan_realigned(frags, {"m": model}, cost, gpus=400, workers=2)

    results["plan_realigned (200 fragments)"] = _time(bench_plan, max(1, repeats // 3))
    return {"backend": BACKEND, "results": results}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats (best-of)")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(run_benchmarks(args.repeats)))
        return 0

    runs = {}
    for label, flag in (("numba", ""), ("numpy", "1")):
        env = dict(os.environ, FRAGSERVE_NO_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--repeats", str(args.repeats)],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return proc.returncode
        doc = json.loads(proc.stdout)
        if doc["backend"] != label:
            print(f"warning: requested {label}, got {doc['backend']} "
                  "(numba missing?)", file=sys.stderr)
        runs[label] = doc["results"]

    names = list(runs["numba"])
    width = max(len(n) for n in names)
    print(f"{'benchmark':<{width}}  {'numba ms':>10}  {'numpy ms':>10}  {'speedup':>8}")
    for name in names:
        jit, plain = runs["numba"][name], runs["numpy"][name]
        ratio = plain / jit if jit > 0 else float("inf")
        print(f"{name:<{width}}  {jit:>10.2f}  {plain:>10.2f}  {ratio:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
