import random

import numpy as np

from fragserve import kernels
from fragserve.kernels import (
    INF_COST,
    _alloc_curve_loops,
    _alloc_curve_numpy,
    _pareto_keep_loops,
    _pareto_keep_numpy,
)


def random_frontier_arrays(rng, n):
    # latency-sorted triples the curve kernel expects
    lats = np.sort(np.array([rng.uniform(0.5, 80.0) for _ in range(n)]))
    shares = np.array([rng.randrange(1, 101) for _ in range(n)], dtype=np.int64)
    batches = np.array([rng.randrange(1, 33) for _ in range(n)], dtype=np.int64)
    return lats, shares, batches


def test_curve_paths_identical():
    rng = random.Random(1234)
    for trial in range(60):
        n = rng.randrange(1, 120)
        lats, shares, batches = random_frontier_arrays(rng, n)
        demand = rng.uniform(0.1, 800.0)
        cap = rng.choice([-1, -1, 1, 3, 10])
        max_share = rng.choice([100, 100, 50, 17])
        a = _alloc_curve_loops(lats, shares, batches, demand, np.int64(cap), np.int64(max_share))
        b = _alloc_curve_numpy(lats, shares, batches, demand, np.int64(cap), np.int64(max_share))
        for x, y in zip(a, b):
            assert np.array_equal(x, y), (trial, n, demand, cap, max_share)


def test_pareto_paths_identical():
    rng = random.Random(99)
    for _ in range(60):
        n = rng.randrange(1, 90)
        # unique (share, batch) pairs like a real grid
        pairs = rng.sample([(r, b) for r in range(1, 40) for b in range(1, 12)], n)
        shares = np.array([p[0] for p in pairs], dtype=np.int64)
        batches = np.array([p[1] for p in pairs], dtype=np.int64)
        lats = np.array([rng.uniform(1.0, 50.0) for _ in range(n)])
        assert np.array_equal(
            _pareto_keep_loops(shares, batches, lats),
            _pareto_keep_numpy(shares, batches, lats),
        )


def test_pareto_keeps_only_undominated():
    shares = np.array([10, 10, 5, 20], dtype=np.int64)
    batches = np.array([2, 4, 4, 1], dtype=np.int64)
    lats = np.array([8.0, 9.0, 9.0, 5.0])
    keep = kernels.pareto_keep(shares, batches, lats)
    # (10,2,8) dominated by (5,4,9)? share 5<=10 ok, batch 4>=2 ok, lat 9>8 no -> kept
    # (10,4,9) dominated by (5,4,9) -> dropped
    assert keep.tolist() == [True, False, True, True]


def test_infeasible_prefix_is_sentinel():
    lats = np.array([4.0, 6.0])
    shares = np.array([80, 90], dtype=np.int64)
    batches = np.array([1, 1], dtype=np.int64)
    best_cost, best_c, best_r, best_b = kernels.alloc_curve_arrays(
        lats, shares, batches, 10.0, -1, 50
    )  # max_share 50 excludes every point
    assert (best_cost == INF_COST).all()


def test_backend_exported():
    assert kernels.BACKEND in ("numba", "numpy")
