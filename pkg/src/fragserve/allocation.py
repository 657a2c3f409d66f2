"""Minimum-resource allocation of one model span under a latency budget.

An allocation is (gpu share, batch size, instance count); its cost is
share * instances, in percent-instances. The search walks the Pareto frontier
of the (share, batch) grid: instances = ceil(demand / per-instance throughput),
feasible when the batch latency fits the budget, minimized by
(cost, instances, share, batch) lexicographic order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .profiles import CostModel, ParetoFrontier


@dataclass(frozen=True)
class AllocConfig:
    share: int
    batch: int
    instances: int

    @property
    def resource(self) -> int:
        return self.share * self.instances

    @property
    def is_null(self) -> bool:
        return self.instances == 0


#: allocation of an empty span: no instances, zero cost
NULL_ALLOC = AllocConfig(0, 0, 0)


class AllocCurve:
    """Best allocation as a function of the latency budget, for one (span, demand).

    Built once from a frontier; a single budget query is a binary search and a
    whole budget grid is one vectorized searchsorted. Infeasible budgets cost
    +inf.
    """

    __slots__ = ("lats", "best_cost", "best_c", "best_r", "best_b")

    def __init__(self, frontier: ParetoFrontier, demand: float, cap: int | None, max_share: int):
        if demand <= 0:
            raise ValueError(f"demand must be > 0, got {demand}")
        self.lats = frontier.by_lat_lats
        capv = -1 if cap is None else int(cap)
        self.best_cost, self.best_c, self.best_r, self.best_b = kernels.alloc_curve_arrays(
            self.lats,
            frontier.by_lat_shares,
            frontier.by_lat_batches,
            demand,
            capv,
            max_share,
        )

    def query(self, budget_ms: float) -> AllocConfig | None:
        idx = int(np.searchsorted(self.lats, budget_ms, side="right")) - 1
        if idx < 0 or self.best_cost[idx] == kernels.INF_COST:
            return None
        return AllocConfig(int(self.best_r[idx]), int(self.best_b[idx]), int(self.best_c[idx]))

    def query_costs(self, budgets_ms: np.ndarray) -> np.ndarray:
        """Vector of allocation costs for a budget grid (inf where infeasible)."""
        idx = np.searchsorted(self.lats, budgets_ms, side="right") - 1
        costs = np.full(len(budgets_ms), np.inf)
        ok = idx >= 0
        if ok.any():
            vals = self.best_cost[np.maximum(idx, 0)]
            feas = ok & (vals != kernels.INF_COST)
            costs[feas] = vals[feas].astype(np.float64)
        return costs


def min_resource(
    cost: CostModel,
    model_id: str,
    start: int,
    end: int,
    demand: float,
    budget_ms: float,
    cap: int | None = None,
    max_share: int = 100,
) -> AllocConfig | None:
    """Cheapest allocation serving `demand` rps within `budget_ms`, or None.

    Empty spans short-circuit to the zero-cost null allocation. A cap bounds
    the instance count (None = unbounded). `max_share` restricts the share
    grid (placement capacity shows up here).
    """
    if start == end:
        return NULL_ALLOC
    if demand <= 0:
        raise ValueError(f"demand must be > 0, got {demand}")
    if budget_ms <= 0:
        return None
    curve = AllocCurve(cost.frontier(model_id, start, end), demand, cap, max_share)
    return curve.query(budget_ms)


def achievable_rps(cost: CostModel, model_id: str, start: int, end: int, alloc: AllocConfig) -> float:
    """Aggregate throughput of an allocation (instances x per-instance rate)."""
    if alloc.is_null:
        return math.inf
    lat = cost.latency(model_id, start, end, alloc.batch, alloc.share)
    if lat == 0.0:
        return math.inf
    return alloc.instances * 1000.0 * alloc.batch / lat
