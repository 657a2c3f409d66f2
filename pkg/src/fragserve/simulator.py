"""Deterministic discrete-event simulation of planned fragment serving.

Requests flow: generated on the device, executed up to the partition point,
shipped over the trace bandwidth, admission-checked at the server, then
batched through the alignment stage (if any) and the shared stage. A stage
dispatches a batch when it is full or when the oldest waiter has waited the
stage budget; service takes the profiled latency of the actual batch size.
A request is dropped on arrival when its worst case (elapsed plus twice the
remaining stage budgets) cannot meet the SLO.

Everything is driven by a single event heap with deterministic tie-breaking,
so identical inputs and seed reproduce identical reports byte for byte.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .grouping import GroupingConfig
from .merging import MergeConfig
from .planners import (
    plan_independent,
    plan_merged,
    plan_optimal,
    plan_realigned,
    plan_static,
)
from .profiles import CostModel
from .realign import ExecutionPlan, RealignConfig
from .workload import bandwidth_at, generate_epoch, transfer_ms

_R_REPLAN, _R_GEN, _R_ARRIVE, _R_TIMEOUT, _R_DONE = range(5)
_EPS = 1e-9


@dataclass(frozen=True)
class SimConfig:
    horizon_s: float = 60.0
    seed: int = 0
    poisson: bool = False
    gpu_capacity: int = 99
    workers: int = 2
    merge_cfg: MergeConfig = field(default_factory=MergeConfig)
    group_cfg: GroupingConfig = field(default_factory=GroupingConfig)
    realign_cfg: RealignConfig = field(default_factory=RealignConfig)
    optimal_group_size: int = 5
    optimal_hard_cap: int = 8


class _Request:
    __slots__ = ("seq", "client_id", "gen_ms", "deadline_ms", "slo_ms", "worst_rem_ms",
                 "stages", "stage_idx", "stage_enq_ms", "status", "done_ms")

    def __init__(self, seq, client_id, gen_ms, slo_ms):
        self.seq = seq
        self.client_id = client_id
        self.gen_ms = gen_ms
        self.slo_ms = slo_ms
        self.deadline_ms = gen_ms + slo_ms
        self.worst_rem_ms = 0.0
        self.stages = ()
        self.stage_idx = 0
        self.stage_enq_ms = 0.0
        self.status = "inflight"
        self.done_ms = None


class _StageRT:
    """Runtime state of one planned stage: FIFO queue plus an instance pool."""

    __slots__ = ("model_id", "start", "end", "share", "batch", "instances", "free",
                 "budget_ms", "queue", "armed_seq", "_lat")

    def __init__(self, stage):
        self.model_id = stage.model_id
        self.start = stage.start
        self.end = stage.end
        self.share = stage.alloc.share
        self.batch = stage.alloc.batch
        self.instances = stage.alloc.instances
        self.free = stage.alloc.instances
        self.budget_ms = stage.budget_ms
        self.queue = deque()
        self.armed_seq = None
        self._lat = {}

    def latency_for(self, k: int, cost: CostModel) -> float:
        lat = self._lat.get(k)
        if lat is None:
            lat = cost.latency(self.model_id, self.start, self.end, k, self.share)
            self._lat[k] = lat
        return lat


@dataclass(frozen=True)
class _Route:
    point: int
    stages: tuple
    worst_rem_ms: float


@dataclass
class EpochRecord:
    epoch: int
    t_s: float
    plan_id: str | None
    total_resource: int | None
    replanned: bool
    feasible: bool
    plan_time_ms: float = 0.0  # volatile; kept off serialized reports


@dataclass
class SimReport:
    planner: str
    horizon_s: float
    generated: int
    completed: int
    dropped: int
    in_flight: int
    latency_p50_ms: float | None
    latency_p95_ms: float | None
    latency_p99_ms: float | None
    max_latency_ms: float | None
    slo_violation_rate: float | None
    drop_rate: float
    epochs: list[EpochRecord]
    requests: list[tuple]
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "planner": self.planner,
            "horizon_s": self.horizon_s,
            "generated": self.generated,
            "completed": self.completed,
            "dropped": self.dropped,
            "in_flight": self.in_flight,
            "latency_ms": {
                "p50": self.latency_p50_ms,
                "p95": self.latency_p95_ms,
                "p99": self.latency_p99_ms,
                "max": self.max_latency_ms,
            },
            "slo_violation_rate": self.slo_violation_rate,
            "drop_rate": self.drop_rate,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "t_s": e.t_s,
                    "plan_id": e.plan_id,
                    "total_resource": e.total_resource,
                    "replanned": e.replanned,
                    "feasible": e.feasible,
                }
                for e in self.epochs
            ],
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def requests_csv(self) -> str:
        lines = ["client,gen_ms,done_ms,latency_ms,deadline_ms,status"]
        for client_id, gen, done, deadline, status in self.requests:
            if done is None:
                done_s = ""
                lat_s = ""
            else:
                done_s = f"{done:.6f}"
                lat_s = f"{done - gen:.6f}"
            lines.append(f"{client_id},{gen:.6f},{done_s},{lat_s},{deadline:.6f},{status}")
        return "\n".join(lines) + "\n"


def plan_to_dict(plan: ExecutionPlan) -> dict:
    def stage_dict(sid, stage):
        gpus = None
        if plan.placement is not None and sid in plan.placement:
            gpus = list(plan.placement[sid])
        return {
            "stage_id": sid,
            "model": stage.model_id,
            "span": [stage.start, stage.end],
            "demand_rps": stage.demand_rps,
            "budget_ms": stage.budget_ms,
            "share": stage.alloc.share,
            "batch": stage.alloc.batch,
            "instances": stage.alloc.instances,
            "members": list(stage.members),
            "gpu": gpus,
        }

    groups = []
    for gi, group in enumerate(plan.groups):
        levels = []
        for li, level in enumerate(group.levels):
            levels.append({
                "point": level.point,
                "align": [stage_dict(f"g{gi}.l{li}.align{ai}", st)
                          for ai, st in enumerate(level.align)],
                "shared": stage_dict(f"g{gi}.l{li}.shared", level.shared),
            })
        groups.append({"levels": levels, "resource": group.resource})
    return {
        "planner": plan.planner,
        "total_resource": plan.total_resource,
        "groups": groups,
    }


def plan_id(plan: ExecutionPlan) -> str:
    doc = json.dumps(plan_to_dict(plan), sort_keys=True)
    return hashlib.sha1(doc.encode()).hexdigest()[:12]


class _Sim:
    def __init__(self, scenario, cost, planner, cfg: SimConfig, fixed_plan=None):
        self.scenario = scenario
        self.cost = cost
        self.planner = planner
        self.cfg = cfg
        self.fixed_plan = fixed_plan
        self.clients = {c.client_id: c for c in scenario.clients}
        self.events = []
        self.seq = 0
        self.routes: dict[str, _Route] = {}
        self.records: list[_Request] = []
        self.epochs: list[EpochRecord] = []
        self.current_points: dict[str, int | None] = {}
        self.rngs = {}
        if cfg.poisson:
            for i, cid in enumerate(sorted(self.clients)):
                self.rngs[cid] = np.random.default_rng((cfg.seed, i))

    # -- event plumbing ---------------------------------------------------

    def _push(self, t, rank, payload):
        self.seq += 1
        heapq.heappush(self.events, (t, rank, self.seq, payload))

    # -- planning ----------------------------------------------------------

    def _run_planner(self, fragments):
        sc, cfg = self.scenario, self.cfg
        rc = cfg.realign_cfg
        if self.planner == "realign":
            return plan_realigned(fragments, sc.models, self.cost, sc.gpus, cfg.gpu_capacity,
                                  merge_cfg=cfg.merge_cfg, group_cfg=cfg.group_cfg,
                                  realign_cfg=rc, workers=cfg.workers)
        if self.planner == "independent":
            return plan_independent(fragments, sc.models, self.cost, sc.gpus, cfg.gpu_capacity,
                                    cap=rc.instance_cap, max_share=rc.max_share)
        if self.planner == "merged":
            return plan_merged(fragments, sc.models, self.cost, sc.gpus, cfg.gpu_capacity,
                               cap=rc.instance_cap, max_share=rc.max_share,
                               merge_cfg=cfg.merge_cfg)
        if self.planner == "optimal":
            return plan_optimal(fragments, sc.models, self.cost, sc.gpus, cfg.gpu_capacity,
                                merge_cfg=cfg.merge_cfg, realign_cfg=rc,
                                group_size=cfg.optimal_group_size,
                                hard_cap=cfg.optimal_hard_cap)
        raise ValueError(f"unknown planner {self.planner!r}")

    def _deploy(self, plan: ExecutionPlan, fragments) -> dict[str, _Route]:
        routes: dict[str, _Route] = {}
        frag_by_id = {f.fragment_id: f for f in fragments}
        for group in plan.groups:
            for level in group.levels:
                shared_rt = None if level.shared.is_null else _StageRT(level.shared)
                align_by_frag = {st.members[0]: st for st in level.align}
                for fid in level.shared.members:
                    frag = frag_by_id[fid]
                    st = align_by_frag.get(fid)
                    stages = []
                    d_align = 0.0
                    if st is not None and not st.is_null:
                        stages.append(_StageRT(st))
                        d_align = st.budget_ms
                    if shared_rt is not None:
                        stages.append(shared_rt)
                    worst = 2.0 * (d_align + (level.shared.budget_ms if shared_rt else 0.0))
                    for cid in sorted(frag.clients):
                        routes[cid] = _Route(frag.start_layer, tuple(stages), worst)
        return routes

    def _plan_epoch(self, epoch: int, t_s: float):
        """Plan (or keep) the deployment for the epoch starting at t_s."""
        static = self.planner in ("static", "static-merged")
        if self.fixed_plan is not None or static:
            if epoch > 0:
                prev = self.epochs[-1]
                self.epochs.append(EpochRecord(epoch, t_s, prev.plan_id, prev.total_resource,
                                               False, prev.feasible))
                return
            t0 = time.perf_counter()
            try:
                if self.fixed_plan is not None:
                    plan = self.fixed_plan
                    wl = generate_epoch(self.scenario.clients, t_s, self.cost)
                    fragments = wl.fragments
                else:
                    plan = plan_static(self.scenario.clients, self.scenario.models, self.cost,
                                       self.scenario.gpus, self.cfg.gpu_capacity,
                                       merged=self.planner == "static-merged",
                                       cap=self.cfg.realign_cfg.instance_cap,
                                       max_share=self.cfg.realign_cfg.max_share,
                                       merge_cfg=self.cfg.merge_cfg)
                    fragments = _plan_fragments(self.scenario, self.cost)
            except InfeasibleError:
                self.routes = {}
                self.epochs.append(EpochRecord(epoch, t_s, None, None, True, False,
                                               (time.perf_counter() - t0) * 1000.0))
                return
            self.routes = self._deploy(plan, fragments)
            self.epochs.append(EpochRecord(epoch, t_s, plan_id(plan), plan.total_resource,
                                           True, True, (time.perf_counter() - t0) * 1000.0))
            return

        wl = generate_epoch(self.scenario.clients, t_s, self.cost)
        points = {c.client_id: None for c in self.scenario.clients}
        points.update({next(iter(f.clients)): f.start_layer for f in wl.fragments})
        if epoch > 0 and points == self.current_points and self.epochs[-1].feasible:
            prev = self.epochs[-1]
            self.epochs.append(EpochRecord(epoch, t_s, prev.plan_id, prev.total_resource,
                                           False, True))
            return
        self.current_points = points
        t0 = time.perf_counter()
        try:
            plan = self._run_planner(wl.fragments)
        except InfeasibleError:
            self.routes = {}
            self.epochs.append(EpochRecord(epoch, t_s, None, None, True, False,
                                           (time.perf_counter() - t0) * 1000.0))
            return
        self.routes = self._deploy(plan, wl.fragments)
        self.epochs.append(EpochRecord(epoch, t_s, plan_id(plan), plan.total_resource,
                                       True, True, (time.perf_counter() - t0) * 1000.0))

    # -- request lifecycle --------------------------------------------------

    def _gen_request(self, cid: str, now: float):
        client = self.clients[cid]
        req = _Request(self.seq, cid, now, client.slo_ms)
        self.records.append(req)
        route = self.routes.get(cid)
        if route is None:
            req.status = "dropped"
            return
        model = client.model
        mobile = client.device.mobile_ms(model.model_id, route.point)
        bw = bandwidth_at(client.trace, now / 1000.0)
        arrive = now + mobile + transfer_ms(model.payload_bytes(route.point), bw)
        req.stages = route.stages
        req.worst_rem_ms = route.worst_rem_ms
        self._push(arrive, _R_ARRIVE, req)

    def _next_gen(self, cid: str, now: float):
        client = self.clients[cid]
        if self.cfg.poisson:
            gap = float(self.rngs[cid].exponential(1000.0 / client.rate_rps))
        else:
            gap = 1000.0 / client.rate_rps
        return now + gap

    def _arrive(self, req: _Request, now: float):
        elapsed = now - req.gen_ms
        if elapsed + req.worst_rem_ms > req.slo_ms + _EPS:
            req.status = "dropped"
            return
        if not req.stages:
            self._complete(req, now)
            return
        self._enqueue(req.stages[0], req, now)

    def _enqueue(self, stage: _StageRT, req: _Request, now: float):
        req.stage_enq_ms = now
        stage.queue.append(req)
        self._service(stage, now)

    def _complete(self, req: _Request, now: float):
        req.status = "completed"
        req.done_ms = now

    def _service(self, stage: _StageRT, now: float):
        q = stage.queue
        while stage.free > 0 and q:
            if len(q) >= stage.batch:
                k = stage.batch
            elif now - q[0].stage_enq_ms >= stage.budget_ms - _EPS:
                k = len(q)
            else:
                break
            batch = [q.popleft() for _ in range(k)]
            stage.free -= 1
            lat = stage.latency_for(k, self.cost)
            self._push(now + lat, _R_DONE, (stage, batch))
        if q:
            # Arm the partial-batch timer only when the head is not yet overdue;
            # an overdue head is blocked on instances, and _stage_done re-services.
            head = q[0]
            tfire = head.stage_enq_ms + stage.budget_ms
            if tfire > now + _EPS and stage.armed_seq != head.seq:
                stage.armed_seq = head.seq
                self._push(tfire, _R_TIMEOUT, (stage, head.seq))

    def _stage_done(self, stage: _StageRT, batch, now: float):
        stage.free += 1
        for req in batch:
            req.stage_idx += 1
            if req.stage_idx < len(req.stages):
                self._enqueue(req.stages[req.stage_idx], req, now)
            else:
                self._complete(req, now)
        self._service(stage, now)

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimReport:
        horizon_ms = self.cfg.horizon_s * 1000.0
        epoch_ms = self.scenario.epoch_s * 1000.0
        self._plan_epoch(0, 0.0)
        k = 1
        while k * epoch_ms < horizon_ms:
            self._push(k * epoch_ms, _R_REPLAN, k)
            k += 1
        for cid in sorted(self.clients):
            first = self._next_gen(cid, 0.0) if self.cfg.poisson else 0.0
            if first < horizon_ms:
                self._push(first, _R_GEN, cid)

        while self.events and self.events[0][0] <= horizon_ms + _EPS:
            now, rank, _, payload = heapq.heappop(self.events)
            if rank == _R_REPLAN:
                self._plan_epoch(payload, now / 1000.0)
            elif rank == _R_GEN:
                self._gen_request(payload, now)
                nxt = self._next_gen(payload, now)
                if nxt < horizon_ms:
                    self._push(nxt, _R_GEN, payload)
            elif rank == _R_ARRIVE:
                self._arrive(payload, now)
            elif rank == _R_TIMEOUT:
                stage, seq = payload
                if stage.armed_seq == seq:
                    stage.armed_seq = None
                    self._service(stage, now)
            else:
                stage, batch = payload
                self._stage_done(stage, batch, now)

        return self._report()

    def _report(self) -> SimReport:
        generated = len(self.records)
        completed = [r for r in self.records if r.status == "completed"]
        dropped = sum(1 for r in self.records if r.status == "dropped")
        in_flight = generated - len(completed) - dropped
        lats = np.array([r.done_ms - r.gen_ms for r in completed])
        if len(lats):
            p50, p95, p99 = (float(x) for x in np.percentile(lats, [50, 95, 99]))
            mx = float(lats.max())
            violations = sum(1 for r in completed if r.done_ms > r.deadline_ms + _EPS)
            viol_rate = violations / len(completed)
        else:
            p50 = p95 = p99 = mx = None
            viol_rate = None
        report = SimReport(
            planner=self.planner,
            horizon_s=self.cfg.horizon_s,
            generated=generated,
            completed=len(completed),
            dropped=dropped,
            in_flight=in_flight,
            latency_p50_ms=p50,
            latency_p95_ms=p95,
            latency_p99_ms=p99,
            max_latency_ms=mx,
            slo_violation_rate=viol_rate,
            drop_rate=dropped / generated if generated else 0.0,
            epochs=self.epochs,
            requests=[(r.client_id, r.gen_ms, r.done_ms, r.deadline_ms, r.status)
                      for r in self.records],
            config=_config_echo(self.scenario, self.planner, self.cfg),
        )
        assert report.generated == report.completed + report.dropped + report.in_flight
        return report


def _plan_fragments(scenario, cost):
    """Fragments matching the static plan's routes (average-bandwidth cuts)."""
    from .workload import average_mbps, partition_client

    out = []
    for client in sorted(scenario.clients, key=lambda c: c.client_id):
        frag = partition_client(client, average_mbps(client.trace), cost)
        if frag is not None:
            out.append(frag)
    return out


def _config_echo(scenario, planner, cfg: SimConfig) -> dict:
    return {
        "planner": planner,
        "horizon_s": cfg.horizon_s,
        "seed": cfg.seed,
        "poisson": cfg.poisson,
        "gpus": scenario.gpus,
        "gpu_capacity": cfg.gpu_capacity,
        "epoch_s": scenario.epoch_s,
        "workers": cfg.workers,
        "merge_threshold": None if math.isinf(cfg.merge_cfg.threshold) else cfg.merge_cfg.threshold,
        "budget_tolerance_ms": cfg.merge_cfg.budget_tolerance_ms,
        "group_size": cfg.group_cfg.group_size,
        "factor_weights": list(cfg.group_cfg.factor_weights),
        "budget_grid_ms": cfg.realign_cfg.budget_step_ms,
        "instance_cap": cfg.realign_cfg.instance_cap,
        "all_layers": cfg.realign_cfg.all_layers,
        "per_fragment_budgets": cfg.realign_cfg.per_fragment_budgets,
        "max_share": cfg.realign_cfg.max_share,
        "clients": len(scenario.clients),
    }


def simulate(scenario, cost, planner: str, cfg: SimConfig, fixed_plan=None) -> SimReport:
    """Run one simulation; `fixed_plan` bypasses planning (kept for a whole run)."""
    return _Sim(scenario, cost, planner, cfg, fixed_plan=fixed_plan).run()
