"""Incremental merging of uniform fragments.

Fragments demanding the same model suffix with near-identical budgets can be
served by one allocation. The cheapest allocation for a small demand usually
over-provisions, so piling more demand onto it is free until the spare
capacity (the resource margin) runs out. Merging accumulates fragments in
descending rate order and closes the merged fragment once the margin falls to
the configured threshold, keeping some slack for later re-partitioning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .allocation import achievable_rps, min_resource
from .errors import InfeasibleError
from .profiles import CostModel, ModelSpec
from .workload import Fragment


@dataclass(frozen=True)
class MergeConfig:
    threshold: float = 0.2
    #: budgets within one tolerance bucket count as uniform
    budget_tolerance_ms: float = 1.0

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("merge threshold must be >= 0")
        if self.budget_tolerance_ms <= 0:
            raise ValueError("budget tolerance must be > 0")


def resource_margin(achievable_rps: float, demanded_rps: float) -> float:
    """Spare capacity of an allocation relative to its demand."""
    if demanded_rps <= 0:
        raise ValueError(f"demanded rate must be > 0, got {demanded_rps}")
    if achievable_rps < demanded_rps:
        raise InfeasibleError(
            f"allocation serves {achievable_rps:.3f} rps but {demanded_rps:.3f} demanded"
        )
    return (achievable_rps - demanded_rps) / demanded_rps


def _merged_fragment(members: list[Fragment]) -> Fragment:
    if len(members) == 1:
        return members[0]
    clients: set[str] = set()
    for m in members:
        clients |= m.clients
    return Fragment(
        fragment_id=f"{members[0].fragment_id}+{len(members) - 1}",
        model_id=members[0].model_id,
        start_layer=members[0].start_layer,
        budget_ms=min(m.budget_ms for m in members),
        rate_rps=math.fsum(m.rate_rps for m in members),
        clients=frozenset(clients),
        merged=True,
    )


def merge_fragments(
    fragments,
    cfg: MergeConfig,
    cost: CostModel,
    models: dict[str, ModelSpec],
    cap: int | None = None,
    max_share: int = 100,
) -> list[Fragment]:
    """Merge uniform fragments until the resource margin drops to the threshold.

    Uniformity means same (model, start layer) and budgets within the
    tolerance bucket. Members accumulate in descending rate order; after each
    addition the merged fragment is re-allocated (span [p, N), budget t/2 with
    t the running member minimum) and closed once margin <= threshold. A
    threshold of inf never closes, collapsing every class to one fragment.

    Output order follows the input: a merged fragment sits where its earliest
    member was. Raises InfeasibleError when any fragment cannot be served
    alone.
    """
    fragments = list(fragments)
    order = {f.fragment_id: i for i, f in enumerate(fragments)}
    classes: dict[tuple, list[Fragment]] = {}
    for f in fragments:
        key = (f.model_id, f.start_layer, math.floor(f.budget_ms / cfg.budget_tolerance_ms))
        classes.setdefault(key, []).append(f)

    merge_all = math.isinf(cfg.threshold)
    out: list[tuple[int, Fragment]] = []  # (first input index, fragment)

    def close(acc: list[Fragment]):
        idx = min(order[m.fragment_id] for m in acc)
        out.append((idx, _merged_fragment(acc)))

    def solo_alloc(frag: Fragment, model_id: str, p: int, end: int):
        alloc = min_resource(
            cost, model_id, p, end, frag.rate_rps, frag.budget_ms / 2.0,
            cap=cap, max_share=max_share,
        )
        if alloc is None:
            raise InfeasibleError(
                f"fragment {frag.fragment_id!r} cannot be served alone"
                f" (span [{p}, {end}), budget {frag.budget_ms / 2.0:.3f} ms)"
            )
        return alloc

    for key in sorted(classes):
        members = sorted(classes[key], key=lambda f: (-f.rate_rps, f.fragment_id))
        model_id, p, _ = key
        end = models[model_id].layer_count
        if len(members) == 1:
            solo_alloc(members[0], model_id, p, end)
            out.append((order[members[0].fragment_id], members[0]))
            continue
        acc: list[Fragment] = []
        acc_rate = 0.0
        acc_budget = math.inf
        for frag in members:
            if not acc:
                alloc = solo_alloc(frag, model_id, p, end)
                acc, acc_rate, acc_budget = [frag], frag.rate_rps, frag.budget_ms
            else:
                candidate_rate = acc_rate + frag.rate_rps
                candidate_budget = min(acc_budget, frag.budget_ms)
                alloc = min_resource(
                    cost, model_id, p, end, candidate_rate, candidate_budget / 2.0,
                    cap=cap, max_share=max_share,
                )
                if alloc is None:
                    # adding this one overflows the cap; close without it
                    close(acc)
                    alloc = solo_alloc(frag, model_id, p, end)
                    acc, acc_rate, acc_budget = [frag], frag.rate_rps, frag.budget_ms
                else:
                    acc.append(frag)
                    acc_rate, acc_budget = candidate_rate, candidate_budget
            margin = resource_margin(achievable_rps(cost, model_id, p, end, alloc), acc_rate)
            if not merge_all and margin <= cfg.threshold:
                close(acc)
                acc, acc_rate, acc_budget = [], 0.0, math.inf
        if acc:
            close(acc)

    out.sort(key=lambda pair: pair[0])
    return [f for _, f in out]
