"""Bandwidth traces, client specs, and per-epoch fragment generation.

Each client runs the model prefix [0, p) on its device and ships layer p's
activations to the server, which runs the suffix [p, N). The partition point
is chosen Neurosurgeon-style: minimize estimated end-to-end latency at the
client's current bandwidth. The server-side remainder of the latency target
becomes the fragment's time budget.
"""
from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ProfileParseError, ValidationError
from .profiles import CostModel, DeviceProfile, ModelSpec

log = logging.getLogger(__name__)

TRACE_HEADER = ["time_s", "mbps"]


# ---------------------------------------------------------------------------
# bandwidth traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthTrace:
    """Piecewise-constant bandwidth samples: value holds until the next sample."""

    times_s: tuple[float, ...]
    mbps: tuple[float, ...]

    def __post_init__(self):
        if not self.times_s or len(self.times_s) != len(self.mbps):
            raise ValidationError("trace needs matching, non-empty time/mbps sequences")
        if any(b <= a for a, b in zip(self.times_s, self.times_s[1:])):
            raise ValidationError("trace times must be strictly increasing")
        if any(v <= 0 for v in self.mbps):
            raise ValidationError("trace bandwidth must be > 0")


def bandwidth_at(trace: BandwidthTrace, t_s: float) -> float:
    if t_s < 0:
        raise ValueError(f"negative trace time {t_s}")
    idx = bisect.bisect_right(trace.times_s, t_s) - 1
    if idx < 0:
        return trace.mbps[0]
    return trace.mbps[idx]


def average_mbps(trace: BandwidthTrace) -> float:
    """Time-averaged bandwidth; the final sample holds as long as its predecessor."""
    n = len(trace.times_s)
    if n == 1:
        return trace.mbps[0]
    durations = [b - a for a, b in zip(trace.times_s, trace.times_s[1:])]
    durations.append(durations[-1])
    total = sum(durations)
    return sum(v * d for v, d in zip(trace.mbps, durations)) / total


def load_trace(path: str | Path) -> BandwidthTrace:
    path = Path(path)
    times, mbps = [], []
    with path.open(newline="") as fh:
        filtered = (ln for ln in fh if not ln.lstrip().startswith("#"))
        reader = csv.reader(filtered)
        try:
            header = next(reader)
        except StopIteration:
            raise ProfileParseError(f"{path}: empty trace file") from None
        if [h.strip() for h in header] != TRACE_HEADER:
            raise ProfileParseError(f"{path}: bad header {header!r}, expected time_s,mbps")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ProfileParseError(f"{path}:{lineno}: expected 2 fields")
            try:
                times.append(float(row[0]))
                mbps.append(float(row[1]))
            except ValueError as e:
                raise ProfileParseError(f"{path}:{lineno}: {e}") from e
    try:
        return BandwidthTrace(tuple(times), tuple(mbps))
    except ValidationError as e:
        raise ProfileParseError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# clients and fragments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClientSpec:
    client_id: str
    device: DeviceProfile
    model: ModelSpec
    rate_rps: float
    slo_ms: float
    trace: BandwidthTrace

    def __post_init__(self):
        if self.rate_rps <= 0:
            raise ValidationError(f"client {self.client_id!r}: rate_rps must be > 0")
        if self.slo_ms <= 0:
            raise ValidationError(f"client {self.client_id!r}: slo_ms must be > 0")
        full = self.device.full_ms(self.model.model_id)
        if self.slo_ms > full:
            log.warning(
                "client %s: SLO %.1f ms exceeds full on-device latency %.1f ms; offloading is pointless",
                self.client_id, self.slo_ms, full,
            )


@dataclass(frozen=True)
class Fragment:
    """Server-side model suffix demanded by one or more clients."""

    fragment_id: str
    model_id: str
    start_layer: int
    budget_ms: float
    rate_rps: float
    clients: frozenset[str] = field(default_factory=frozenset)
    merged: bool = False

    def __post_init__(self):
        if self.start_layer < 0:
            raise ValidationError(f"fragment {self.fragment_id!r}: negative start layer")
        if self.budget_ms <= 0:
            raise ValidationError(f"fragment {self.fragment_id!r}: budget must be > 0")
        if self.rate_rps <= 0:
            raise ValidationError(f"fragment {self.fragment_id!r}: rate must be > 0")


def transfer_ms(payload_bytes: int, mbps: float) -> float:
    return payload_bytes * 8.0 / (mbps * 1e6) * 1000.0


def partition_client(client: ClientSpec, mbps: float, cost: CostModel) -> Fragment | None:
    """Pick the latency-minimizing partition point; None when no point leaves budget.

    Estimated total at cut p = on-device prefix + activation transfer + server
    suffix at batch 1 / share 100. Candidates must leave a positive server-side
    budget t = slo - mobile - transfer. Ties prefer the larger p (more stays on
    the device).
    """
    model = client.model
    n = model.layer_count
    best_p = None
    best_est = math.inf
    best_t = 0.0
    for p in range(n + 1):
        mobile = client.device.mobile_ms(model.model_id, p)
        xfer = transfer_ms(model.payload_bytes(p), mbps)
        t = client.slo_ms - mobile - xfer
        if t <= 0:
            continue
        est = mobile + xfer + cost.latency(model.model_id, p, n, 1, 100)
        if est < best_est or (est == best_est and best_p is not None and p > best_p):
            best_p, best_est, best_t = p, est, t
    if best_p is None:
        return None
    return Fragment(
        fragment_id=client.client_id,
        model_id=model.model_id,
        start_layer=best_p,
        budget_ms=best_t,
        rate_rps=client.rate_rps,
        clients=frozenset({client.client_id}),
    )


@dataclass(frozen=True)
class EpochWorkload:
    t_s: float
    fragments: tuple[Fragment, ...]
    infeasible: tuple[str, ...]


def generate_epoch(clients, t_s: float, cost: CostModel) -> EpochWorkload:
    """Fragment every client at its bandwidth at time t_s; order by client_id."""
    fragments = []
    infeasible = []
    for client in sorted(clients, key=lambda c: c.client_id):
        bw = bandwidth_at(client.trace, t_s)
        frag = partition_client(client, bw, cost)
        if frag is None:
            infeasible.append(client.client_id)
        else:
            fragments.append(frag)
    return EpochWorkload(t_s, tuple(fragments), tuple(infeasible))
