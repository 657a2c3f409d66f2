"""Numeric hot kernels: numba fast path with a pure-numpy fallback.

Two kernels live here because they dominate planning time:

* ``pareto_keep`` filters the (share, batch, latency) grid down to the
  non-dominated triples.
* ``alloc_curve_arrays`` turns a latency-sorted frontier into prefix-minimum
  "best allocation so far" arrays, so a budget query is a single binary search
  and a whole budget grid is one vectorized searchsorted.

Set ``FRAGSERVE_NO_NUMBA=1`` to force the numpy path (the backend in use is
exported as ``BACKEND``). Both paths are exact-equal by construction: the
numpy path packs the lexicographic comparison key (cost, instances, share,
batch) into an int64 and takes a running minimum, the numba path does the
same comparison longhand.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("FRAGSERVE_NO_NUMBA", "").strip().lower()
_DISABLED = _flag in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by FRAGSERVE_NO_NUMBA")
    from numba import njit

    BACKEND = "numba"
except ImportError:  # pragma: no cover - exercised via subprocess in tests
    njit = None
    BACKEND = "numpy"

# Bit layout of the packed comparison key (int64, low to high):
#   batch 7 bits | share 7 bits | instances 21 bits | cost 28 bits
# Shares are 1..100 and batches are capped at 127 by the frontier builder, so
# every real allocation fits. The all-ones key doubles as the infeasible
# sentinel and decodes to the INF_* values below.
MAX_INSTANCES = (1 << 21) - 1
INF_COST = (1 << 28) - 1
INF_C = MAX_INSTANCES
INF_R = 127
INF_B = 127
_BIG_KEY = np.int64((1 << 63) - 1)


# ---------------------------------------------------------------------------
# Pareto dominance filter
# ---------------------------------------------------------------------------

def _pareto_keep_loops(shares, batches, lats):
    n = shares.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    for i in range(n):
        ri = shares[i]
        bi = batches[i]
        li = lats[i]
        for j in range(n):
            if j == i:
                continue
            if shares[j] <= ri and batches[j] >= bi and lats[j] <= li:
                keep[i] = False
                break
    return keep


def _pareto_keep_numpy(shares, batches, lats):
    # dom[i, j] is True when j dominates i; grid points are unique in
    # (share, batch) so no strictness check is needed.
    dom = (
        (shares[None, :] <= shares[:, None])
        & (batches[None, :] >= batches[:, None])
        & (lats[None, :] <= lats[:, None])
    )
    np.fill_diagonal(dom, False)
    return ~dom.any(axis=1)


# ---------------------------------------------------------------------------
# Allocation curve: prefix-minimum best allocation over a lat-sorted frontier
# ---------------------------------------------------------------------------

def _alloc_curve_loops(lats, shares, batches, demand, cap, max_share):
    n = lats.shape[0]
    best_cost = np.empty(n, np.int64)
    best_c = np.empty(n, np.int64)
    best_r = np.empty(n, np.int64)
    best_b = np.empty(n, np.int64)
    capv = cap if cap >= 0 else MAX_INSTANCES
    if capv > MAX_INSTANCES:
        capv = MAX_INSTANCES
    bc = np.int64(INF_COST)
    cc = np.int64(INF_C)
    cr = np.int64(INF_R)
    cb = np.int64(INF_B)
    for i in range(n):
        r = shares[i]
        b = batches[i]
        if r <= max_share:
            cf = np.ceil(demand * lats[i] / (1000.0 * b))
            if cf < 1.0:
                cf = 1.0
            if cf <= capv:
                c = np.int64(cf)
                cost = r * c
                if cost < bc or (
                    cost == bc
                    and (c < cc or (c == cc and (r < cr or (r == cr and b < cb))))
                ):
                    bc = cost
                    cc = c
                    cr = r
                    cb = b
        best_cost[i] = bc
        best_c[i] = cc
        best_r[i] = cr
        best_b[i] = cb
    return best_cost, best_c, best_r, best_b


def _alloc_curve_numpy(lats, shares, batches, demand, cap, max_share):
    capv = cap if cap >= 0 else MAX_INSTANCES
    capv = min(capv, MAX_INSTANCES)
    cf = np.ceil(demand * lats / (1000.0 * batches))
    np.maximum(cf, 1.0, out=cf)
    bad = (shares > max_share) | (cf > capv)
    c = np.minimum(cf, float(MAX_INSTANCES)).astype(np.int64)
    cost = shares * c
    key = (cost << 35) | (c << 14) | (shares << 7) | batches
    key[bad] = _BIG_KEY
    key = np.minimum.accumulate(key)
    best_cost = key >> 35
    best_c = (key >> 14) & MAX_INSTANCES
    best_r = (key >> 7) & 127
    best_b = key & 127
    return best_cost, best_c, best_r, best_b


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    _pareto_jit = njit(cache=True, nogil=True)(_pareto_keep_loops)
    _curve_jit = njit(cache=True, nogil=True)(_alloc_curve_loops)

    def pareto_keep(shares, batches, lats):
        return _pareto_jit(shares, batches, lats)

    def alloc_curve_arrays(lats, shares, batches, demand, cap, max_share):
        return _curve_jit(lats, shares, batches, float(demand), np.int64(cap), np.int64(max_share))

else:

    def pareto_keep(shares, batches, lats):
        return _pareto_keep_numpy(shares, batches, lats)

    def alloc_curve_arrays(lats, shares, batches, demand, cap, max_share):
        return _alloc_curve_numpy(lats, shares, batches, float(demand), np.int64(cap), np.int64(max_share))
