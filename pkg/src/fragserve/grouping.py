"""Similarity-driven grouping of fragments ahead of re-partitioning.

Fragments are graph nodes; edge weights are Euclidean distances over min-max
normalized (start layer, budget, rate), optionally factor-weighted. Grouping
cost charges each group its internal weight variance plus the weight of every
edge it cuts (each cut edge is charged once per incident group). A seeded
greedy fills K = ceil(n/M) groups of capacity M: random seed nodes, then the
remaining fragments placed one at a time where the cost increase is least,
committing the fragment with the largest regret (gap between its best and
second-best group) first. Regret order beats placing by descending rate or
input order by a wide margin against random balanced groupings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .workload import Fragment


@dataclass(frozen=True)
class GroupingConfig:
    group_size: int = 5
    factor_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group size must be >= 1")
        if len(self.factor_weights) != 3 or any(w < 0 for w in self.factor_weights):
            raise ValueError("factor weights must be 3 non-negative numbers")


@dataclass(frozen=True)
class SimilarityGraph:
    fragments: tuple[Fragment, ...]
    weights: np.ndarray  # symmetric, zero diagonal

    def __len__(self) -> int:
        return len(self.fragments)


def _normalize(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def build_graph(fragments, cfg: GroupingConfig) -> SimilarityGraph:
    fragments = tuple(fragments)
    p = _normalize(np.array([f.start_layer for f in fragments], dtype=np.float64))
    t = _normalize(np.array([f.budget_ms for f in fragments], dtype=np.float64))
    q = _normalize(np.array([f.rate_rps for f in fragments], dtype=np.float64))
    wp, wt, wq = cfg.factor_weights
    sq = (
        wp * (p[:, None] - p[None, :]) ** 2
        + wt * (t[:, None] - t[None, :]) ** 2
        + wq * (q[:, None] - q[None, :]) ** 2
    )
    return SimilarityGraph(fragments, np.sqrt(sq))


def grouping_cost(graph: SimilarityGraph, groups) -> float:
    """Internal-variance plus cut-weight cost of a complete disjoint grouping."""
    n = len(graph)
    seen: set[int] = set()
    for g in groups:
        for i in g:
            if i in seen:
                raise ValidationError(f"node {i} appears in more than one group")
            seen.add(i)
    if seen != set(range(n)):
        raise ValidationError("groups must cover every node exactly once")

    w = graph.weights
    total = 0.0
    for g in groups:
        g = list(g)
        internal = [w[a, b] for i, a in enumerate(g) for b in g[i + 1:]]
        if internal:
            m = len(internal)
            mean = sum(internal) / m
            total += sum((x - mean) ** 2 for x in internal) / m
        others = [x for x in range(n) if x not in set(g)]
        if others:
            total += float(w[np.ix_(g, others)].sum())
    return total


def group_fragments(graph: SimilarityGraph, cfg: GroupingConfig) -> list[list[int]]:
    """Greedy K-way grouping; returns groups of node indices.

    Deterministic for a fixed seed: seed nodes come from the seeded RNG; each
    step commits the unplaced node with the largest regret (cost-increase gap
    between its best and second-best non-full group) to its best group. Ties
    go to the lowest node index, then the lowest group index.
    """
    n = len(graph)
    if n == 0:
        return []
    m = cfg.group_size
    k = math.ceil(n / m)
    if k == 1:
        return [list(range(n))]
    rng = np.random.default_rng(cfg.seed)
    seeds = sorted(int(i) for i in rng.choice(n, size=k, replace=False))

    w = graph.weights
    gid = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(k, dtype=np.int64)
    edge_count = np.zeros(k, dtype=np.int64)
    edge_sum = np.zeros(k)
    edge_sqsum = np.zeros(k)
    # per-node running sums of edges into each group, kept incrementally so a
    # step costs O(n k) instead of re-scanning the assigned set
    grp_sum = np.zeros((n, k))
    grp_sqsum = np.zeros((n, k))
    tot_w = np.zeros(n)
    for g, node in enumerate(seeds):
        gid[node] = g
        sizes[g] = 1
        grp_sum[:, g] += w[:, node]
        grp_sqsum[:, g] += w[:, node] ** 2
        tot_w += w[:, node]

    for _ in range(n - k):
        denom_old = np.maximum(edge_count, 1)
        old_var = np.where(edge_count > 0,
                           edge_sqsum / denom_old - (edge_sum / denom_old) ** 2, 0.0)
        new_m = edge_count + sizes
        denom_new = np.maximum(new_m, 1)
        new_s = edge_sum[None, :] + grp_sum
        new_ss = edge_sqsum[None, :] + grp_sqsum
        new_var = new_ss / denom_new[None, :] - (new_s / denom_new[None, :]) ** 2
        delta = (new_var - old_var[None, :]) + 2.0 * (tot_w[:, None] - grp_sum)
        delta = np.where((sizes < m)[None, :], delta, np.inf)

        idx = np.flatnonzero(gid < 0)
        du = delta[idx]
        part = np.partition(du, 1, axis=1)
        regret = part[:, 1] - part[:, 0]  # inf when one group remains open
        regret[np.isnan(regret)] = np.inf
        v = int(idx[np.argmax(regret)])
        g = int(np.argmin(delta[v]))

        gid[v] = g
        edge_count[g] += sizes[g]
        edge_sum[g] += grp_sum[v, g]
        edge_sqsum[g] += grp_sqsum[v, g]
        sizes[g] += 1
        grp_sum[:, g] += w[:, v]
        grp_sqsum[:, g] += w[:, v] ** 2
        tot_w += w[:, v]

    return [[int(i) for i in np.flatnonzero(gid == g)] for g in range(k)]
