"""Planners: turn a fragment workload into a placed execution plan.

* ``realign``        merge -> similarity grouping -> per-group re-partitioning
* ``independent``    one allocation per fragment, no merging
* ``merged``         collapse every uniformity class, then independent
* ``static``         independent, but partitioned at each trace's average bandwidth
* ``static-merged``  static with full merging
* ``optimal``        exhaustive search over all groupings (small inputs only)
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

from .allocation import min_resource
from .errors import InfeasibleError
from .grouping import GroupingConfig, build_graph, group_fragments
from .merging import MergeConfig, merge_fragments
from .placement import place_plan
from .profiles import CostModel, ModelSpec
from .realign import (
    ExecutionPlan,
    GroupPlan,
    Level,
    NULL_ALLOC,
    RealignConfig,
    StagePlan,
    realign,
)
from .workload import ClientSpec, Fragment, average_mbps, partition_client

PLANNERS = ("realign", "independent", "merged", "static", "static-merged", "optimal")


def _single_fragment_group(frag: Fragment, models: dict[str, ModelSpec], cost: CostModel,
                           cap: int | None, max_share: int) -> GroupPlan:
    """One fragment on its own: no alignment, shared stage with budget t/2."""
    end = models[frag.model_id].layer_count
    budget = frag.budget_ms / 2.0
    if frag.start_layer == end:
        shared = StagePlan(frag.model_id, end, end, frag.rate_rps, 0.0, NULL_ALLOC,
                           (frag.fragment_id,))
        return GroupPlan((Level(end, (), shared),))
    alloc = min_resource(cost, frag.model_id, frag.start_layer, end, frag.rate_rps,
                         budget, cap=cap, max_share=max_share)
    if alloc is None:
        raise InfeasibleError(
            f"fragment {frag.fragment_id!r} infeasible: span [{frag.start_layer}, {end}),"
            f" {frag.rate_rps} rps within {budget:.3f} ms"
        )
    shared = StagePlan(frag.model_id, frag.start_layer, end, frag.rate_rps, budget, alloc,
                       (frag.fragment_id,))
    return GroupPlan((Level(frag.start_layer, (), shared),))


def _finish(planner: str, groups, gpus: int, capacity: int) -> ExecutionPlan:
    groups = tuple(groups)
    total = sum(g.resource for g in groups)
    plan = ExecutionPlan(planner, groups, total)
    return place_plan(plan, gpus, capacity)


def plan_independent(fragments, models, cost, gpus: int, capacity: int = 99,
                     cap: int | None = None, max_share: int = 100,
                     planner_name: str = "independent") -> ExecutionPlan:
    groups = [_single_fragment_group(f, models, cost, cap, max_share) for f in fragments]
    return _finish(planner_name, groups, gpus, capacity)


def plan_merged(fragments, models, cost, gpus: int, capacity: int = 99,
                cap: int | None = None, max_share: int = 100,
                merge_cfg: MergeConfig | None = None,
                planner_name: str = "merged") -> ExecutionPlan:
    cfg = MergeConfig(threshold=math.inf,
                      budget_tolerance_ms=(merge_cfg.budget_tolerance_ms if merge_cfg else 1.0))
    merged = merge_fragments(fragments, cfg, cost, models, cap=cap, max_share=max_share)
    return plan_independent(merged, models, cost, gpus, capacity, cap, max_share,
                            planner_name=planner_name)


def plan_realigned(fragments, models, cost, gpus: int, capacity: int = 99,
                   merge_cfg: MergeConfig = MergeConfig(),
                   group_cfg: GroupingConfig = GroupingConfig(),
                   realign_cfg: RealignConfig = RealignConfig(),
                   workers: int = 2) -> ExecutionPlan:
    """The full pipeline: merge, group per model, re-partition each group."""
    merged = merge_fragments(fragments, merge_cfg, cost, models,
                             cap=realign_cfg.instance_cap, max_share=realign_cfg.max_share)
    jobs = []  # (model spec, fragment group)
    for model_id in sorted({f.model_id for f in merged}):
        subset = [f for f in merged if f.model_id == model_id]
        graph = build_graph(subset, group_cfg)
        for idx_group in group_fragments(graph, group_cfg):
            jobs.append((models[model_id], [subset[i] for i in idx_group]))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(lambda job: realign(job[1], job[0], cost, realign_cfg), jobs))
    else:
        groups = [realign(frs, spec, cost, realign_cfg) for spec, frs in jobs]
    return _finish("realign", groups, gpus, capacity)


def plan_static(clients, models, cost, gpus: int, capacity: int = 99,
                merged: bool = False, cap: int | None = None, max_share: int = 100,
                merge_cfg: MergeConfig | None = None) -> ExecutionPlan:
    """Partition every client at its trace's time-average bandwidth; never re-plan."""
    fragments = []
    infeasible = []
    for client in sorted(clients, key=lambda c: c.client_id):
        frag = partition_client(client, average_mbps(client.trace), cost)
        if frag is None:
            infeasible.append(client.client_id)
        else:
            fragments.append(frag)
    if infeasible:
        raise InfeasibleError(f"static partitioning infeasible for clients: {', '.join(infeasible)}")
    name = "static-merged" if merged else "static"
    if merged:
        return plan_merged(fragments, models, cost, gpus, capacity, cap, max_share,
                           merge_cfg=merge_cfg, planner_name=name)
    return plan_independent(fragments, models, cost, gpus, capacity, cap, max_share,
                            planner_name=name)


# ---------------------------------------------------------------------------
# exhaustive baseline
# ---------------------------------------------------------------------------

def _set_partitions(items: list, max_block: int):
    """Every partition of `items` into blocks of size <= max_block."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in _set_partitions(rest, max_block):
        for i, block in enumerate(sub):
            if len(block) < max_block:
                yield sub[:i] + [block + [first]] + sub[i + 1:]
        yield [[first]] + sub


def plan_optimal(fragments, models, cost, gpus: int, capacity: int = 99,
                 merge_cfg: MergeConfig = MergeConfig(),
                 realign_cfg: RealignConfig = RealignConfig(),
                 group_size: int = 5, hard_cap: int = 8) -> ExecutionPlan:
    """Best grouping by brute force: enumerate every set partition (per model).

    Merging runs first with the same config as the realign pipeline; the
    post-merge fragment count must stay within `hard_cap`.
    """
    merged = merge_fragments(fragments, merge_cfg, cost, models,
                             cap=realign_cfg.instance_cap, max_share=realign_cfg.max_share)
    if len(merged) > hard_cap:
        raise InfeasibleError(
            f"optimal planner limited to {hard_cap} fragments, got {len(merged)} after merging"
        )
    groups: list[GroupPlan] = []
    for model_id in sorted({f.model_id for f in merged}):
        subset = [f for f in merged if f.model_id == model_id]
        spec = models[model_id]
        cache: dict[tuple, tuple[float, GroupPlan | None]] = {}

        def realign_block(block: tuple) -> tuple[float, GroupPlan | None]:
            if block not in cache:
                try:
                    plan = realign([subset[i] for i in block], spec, cost, realign_cfg)
                    cache[block] = (plan.resource, plan)
                except InfeasibleError:
                    cache[block] = (math.inf, None)
            return cache[block]

        best_cost = math.inf
        best_blocks: list[tuple] | None = None
        for partition in _set_partitions(list(range(len(subset))), group_size):
            blocks = [tuple(sorted(b)) for b in partition]
            total = 0.0
            for b in blocks:
                c, _ = realign_block(b)
                total += c
                if total >= best_cost:
                    break
            if total < best_cost:
                best_cost = total
                best_blocks = sorted(blocks)
        if best_blocks is None or math.isinf(best_cost):
            raise InfeasibleError(f"optimal planner found no feasible grouping for {model_id}")
        for b in best_blocks:
            groups.append(realign_block(b)[1])
    return _finish("optimal", groups, gpus, capacity)
