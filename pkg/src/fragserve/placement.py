"""First-fit-decreasing placement of stage instances onto GPUs.

Instances are sorted by share (largest first) and dropped into the first GPU
with room, preferring a GPU that already hosts an instance of the same level
so an alignment stage and its shared stage land together when possible.
"""
from __future__ import annotations

from .errors import InfeasibleError
from .realign import ExecutionPlan


def stage_ids(plan: ExecutionPlan):
    """Deterministic stage ids: g<group>.l<level>.align<i> / g<group>.l<level>.shared."""
    out = []
    for gi, group in enumerate(plan.groups):
        for li, level in enumerate(group.levels):
            for ai, stage in enumerate(level.align):
                out.append((f"g{gi}.l{li}.align{ai}", stage, (gi, li)))
            out.append((f"g{gi}.l{li}.shared", level.shared, (gi, li)))
    return out


def pack(plan: ExecutionPlan, gpu_count: int, capacity: int = 99) -> dict[str, tuple[int, ...]]:
    """Place every instance; returns stage id -> per-instance GPU indices.

    Raises InfeasibleError when the instances cannot fit (including any single
    share above the per-GPU capacity).
    """
    if gpu_count < 1:
        raise ValueError("gpu_count must be >= 1")
    if not 1 <= capacity <= 100:
        raise ValueError("capacity must be in 1..100")

    instances = []  # (share, stage_id, instance idx, level key)
    for sid, stage, level_key in stage_ids(plan):
        if stage.alloc.is_null:
            continue
        if stage.alloc.share > capacity:
            raise InfeasibleError(
                f"stage {sid} needs share {stage.alloc.share} > GPU capacity {capacity}"
            )
        for idx in range(stage.alloc.instances):
            instances.append((stage.alloc.share, sid, idx, level_key))
    instances.sort(key=lambda x: (-x[0], x[1], x[2]))

    load = [0] * gpu_count
    level_gpus: dict[tuple, set[int]] = {}
    placed: dict[str, list[int]] = {}
    for share, sid, idx, level_key in instances:
        fits = [g for g in range(gpu_count) if load[g] + share <= capacity]
        if not fits:
            total = sum(s for s, _, _, _ in instances)
            raise InfeasibleError(
                f"cannot place {len(instances)} instances totalling {total} share"
                f" on {gpu_count} GPUs of capacity {capacity}"
            )
        same_level = [g for g in fits if g in level_gpus.get(level_key, ())]
        g = same_level[0] if same_level else fits[0]
        load[g] += share
        level_gpus.setdefault(level_key, set()).add(g)
        placed.setdefault(sid, []).append(g)

    # instances were placed in share order; store per-stage lists in instance order
    result: dict[str, tuple[int, ...]] = {}
    for sid, stage, _ in stage_ids(plan):
        if stage.alloc.is_null:
            continue
        result[sid] = tuple(placed[sid])
    return result


def place_plan(plan: ExecutionPlan, gpu_count: int, capacity: int = 99) -> ExecutionPlan:
    return plan.with_placement(pack(plan, gpu_count, capacity))
