"""Re-partitioning a group of fragments so their suffixes can be shared.

A group of fragments (same model, possibly different start layers) is served
in *levels*. A level picks a cut point p: every member with start layer <= p
runs a per-member alignment stage [p_i, p) and then a shared stage [p, N)
that batches the whole level's demand; members past p are handled by deeper
levels, found recursively on the remaining suffix of the start-layer-sorted
group.

Budgets assume worst-case queueing equal to execution, so a fragment with
time budget t gets t/2 of execution across its stages. Within a level the
shared stage gets d_shared and every alignment stage gets the residual
min(t_j)/2 - d_shared; d_shared is searched on a fixed grid. The recursion is
memoized on the suffix index; candidate cut points default to the members'
own start layers plus payload-minimizing boundaries (``all_layers`` scans
every boundary).
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .allocation import NULL_ALLOC, AllocConfig, AllocCurve, min_resource
from .errors import InfeasibleError
from .profiles import CostModel, ModelSpec
from .workload import Fragment


@dataclass(frozen=True)
class RealignConfig:
    budget_step_ms: float = 1.0
    instance_cap: int | None = None
    all_layers: bool = False
    #: alignment budgets from each member's own t/2 instead of the level minimum
    per_fragment_budgets: bool = False
    max_share: int = 100

    def __post_init__(self):
        if self.budget_step_ms <= 0:
            raise ValueError("budget step must be > 0")
        if self.instance_cap is not None and self.instance_cap < 1:
            raise ValueError("instance cap must be >= 1")
        if not 1 <= self.max_share <= 100:
            raise ValueError("max share must be in 1..100")


@dataclass(frozen=True)
class StagePlan:
    model_id: str
    start: int
    end: int
    demand_rps: float
    budget_ms: float
    alloc: AllocConfig
    members: tuple[str, ...]

    @property
    def is_null(self) -> bool:
        return self.start == self.end

    @property
    def resource(self) -> int:
        return self.alloc.resource


@dataclass(frozen=True)
class Level:
    point: int
    align: tuple[StagePlan, ...]
    shared: StagePlan

    @property
    def resource(self) -> int:
        return sum(s.resource for s in self.align) + self.shared.resource


@dataclass(frozen=True)
class GroupPlan:
    levels: tuple[Level, ...]

    @property
    def resource(self) -> int:
        return sum(level.resource for level in self.levels)

    def stages(self):
        for level in self.levels:
            yield from level.align
            yield level.shared


@dataclass(frozen=True)
class ExecutionPlan:
    planner: str
    groups: tuple[GroupPlan, ...]
    total_resource: int
    #: stage id -> per-instance GPU index, filled by placement
    placement: dict[str, tuple[int, ...]] | None = None

    def with_placement(self, placement: dict[str, tuple[int, ...]]) -> "ExecutionPlan":
        return replace(self, placement=placement)


def budget_grid(t_half: float, step_ms: float) -> np.ndarray:
    """Shared-stage budget candidates: t_half down to the grid floor, plus 0.

    Anchored at t_half so the maximal budget is always a candidate; 0 makes
    the no-shared-stage cut (p = N) expressible and is otherwise filtered by
    infeasibility.
    """
    if t_half <= 0:
        return np.array([0.0])
    steps = int(math.ceil(t_half / step_ms))
    vals = t_half - step_ms * np.arange(steps)
    vals = vals[vals > 1e-12]
    return np.concatenate([vals, [0.0]])


def realign(group, model: ModelSpec, cost: CostModel, cfg: RealignConfig) -> GroupPlan:
    """Cheapest level structure for one group; raises InfeasibleError.

    Ties prefer the smallest cut point, then the largest shared budget, so a
    single fragment keeps its own start layer and the full t/2 shared budget.
    """
    frags = sorted(group, key=lambda f: (f.start_layer, f.fragment_id))
    if not frags:
        raise ValueError("cannot realign an empty group")
    if any(f.model_id != model.model_id for f in frags):
        raise ValueError("realign group must share one model")
    n = len(frags)
    n_layers = model.layer_count
    starts = [f.start_layer for f in frags]
    if starts[-1] > n_layers:
        raise ValueError("fragment start layer beyond model end")

    def candidates(i: int) -> list[int]:
        lo = starts[i]
        if cfg.all_layers:
            return list(range(lo, n_layers + 1))
        cands = {p for p in starts[i:]}
        cands.update(b for b in model.payload_local_minima if b >= lo)
        cands.add(n_layers)
        return sorted(cands)

    # memo: suffix start index -> (cost, cut point, next suffix index, d_shared)
    memo: dict[int, tuple[float, int | None, int, float]] = {}

    def solve(i: int) -> float:
        if i == n:
            return 0.0
        if i in memo:
            return memo[i][0]
        best_cost = math.inf
        best = (math.inf, None, n, 0.0)
        for p in candidates(i):
            j = bisect_right(starts, p, lo=i)
            level_frags = frags[i:j]
            sub_cost = solve(j)
            if math.isinf(sub_cost):
                continue
            t_half = min(f.budget_ms for f in level_frags) / 2.0
            ds = budget_grid(t_half, cfg.budget_step_ms)
            totals = np.zeros(len(ds))
            if p < n_layers:
                demand = math.fsum(f.rate_rps for f in level_frags)
                curve = AllocCurve(
                    cost.frontier(model.model_id, p, n_layers), demand, cfg.instance_cap, cfg.max_share
                )
                totals += curve.query_costs(ds)
            for f in level_frags:
                if f.start_layer < p:
                    curve = AllocCurve(
                        cost.frontier(model.model_id, f.start_layer, p),
                        f.rate_rps, cfg.instance_cap, cfg.max_share,
                    )
                    lo = (f.budget_ms / 2.0 if cfg.per_fragment_budgets else t_half)
                    totals += curve.query_costs(lo - ds)
            k = int(np.argmin(totals))  # first minimum = largest d_shared
            if not math.isfinite(totals[k]):
                continue
            total = totals[k] + sub_cost
            if total < best_cost:
                best_cost = total
                best = (total, p, j, float(ds[k]))
        memo[i] = best
        return best_cost

    if math.isinf(solve(0)):
        ids = ", ".join(f.fragment_id for f in frags)
        raise InfeasibleError(f"no feasible re-partitioning for group [{ids}]")

    levels = []
    i = 0
    while i < n:
        _, p, j, d_shared = memo[i]
        levels.append(_build_level(frags[i:j], p, d_shared, model, cost, cfg))
        i = j
    return GroupPlan(tuple(levels))


def _build_level(level_frags, p, d_shared, model, cost, cfg) -> Level:
    n_layers = model.layer_count
    t_half = min(f.budget_ms for f in level_frags) / 2.0
    align = []
    for f in level_frags:
        if f.start_layer == p:
            align.append(
                StagePlan(model.model_id, p, p, f.rate_rps, 0.0, NULL_ALLOC, (f.fragment_id,))
            )
            continue
        d_align = (f.budget_ms / 2.0 if cfg.per_fragment_budgets else t_half) - d_shared
        alloc = min_resource(
            cost, model.model_id, f.start_layer, p, f.rate_rps, d_align,
            cap=cfg.instance_cap, max_share=cfg.max_share,
        )
        if alloc is None:  # pragma: no cover - the sweep only picks feasible points
            raise InfeasibleError(f"alignment stage for {f.fragment_id!r} infeasible at rebuild")
        align.append(
            StagePlan(model.model_id, f.start_layer, p, f.rate_rps, d_align, alloc, (f.fragment_id,))
        )
    members = tuple(f.fragment_id for f in level_frags)
    demand = math.fsum(f.rate_rps for f in level_frags)
    if p == n_layers:
        shared = StagePlan(model.model_id, p, p, demand, 0.0, NULL_ALLOC, members)
    else:
        alloc = min_resource(
            cost, model.model_id, p, n_layers, demand, d_shared,
            cap=cfg.instance_cap, max_share=cfg.max_share,
        )
        if alloc is None:  # pragma: no cover
            raise InfeasibleError(f"shared stage at cut {p} infeasible at rebuild")
        shared = StagePlan(model.model_id, p, n_layers, demand, d_shared, alloc, members)
    return Level(p, tuple(align), shared)
