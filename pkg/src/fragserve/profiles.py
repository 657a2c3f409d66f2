"""Model structure, device latency profiles, and server-side cost models.

A model is a chain of layers; a span [a, b) is a contiguous run of layers
executed on the server. Cost models answer one question: how long does span
[a, b) take at a given batch size and GPU share (integer percent, 1..100)?
Two implementations exist: a synthetic closed-form model and a measured
profile table with conservative interpolation.
"""
from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ProfileParseError, ValidationError
from . import kernels

PROFILE_HEADER = ["model", "start_layer", "end_layer", "batch", "gpu_share", "latency_ms"]


# ---------------------------------------------------------------------------
# model structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    compute_weight: float
    output_bytes: int


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    input_bytes: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValidationError(f"model {self.model_id!r} has no layers")
        if self.input_bytes <= 0:
            raise ValidationError(f"model {self.model_id!r}: input_bytes must be > 0")
        for i, layer in enumerate(self.layers):
            if layer.compute_weight < 0:
                raise ValidationError(f"model {self.model_id!r}: layer {i} has negative weight")
            if layer.output_bytes <= 0:
                raise ValidationError(f"model {self.model_id!r}: layer {i} output_bytes must be > 0")

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @cached_property
    def _cum_weights(self) -> np.ndarray:
        w = np.zeros(len(self.layers) + 1)
        np.cumsum([l.compute_weight for l in self.layers], out=w[1:])
        return w

    def weight_between(self, start: int, end: int) -> float:
        return float(self._cum_weights[end] - self._cum_weights[start])

    def payload_bytes(self, boundary: int) -> int:
        """Bytes crossing the network when the model is cut at `boundary`.

        Boundary 0 ships the raw input; boundary k >= 1 ships layer k-1's output.
        """
        if boundary == 0:
            return self.input_bytes
        return self.layers[boundary - 1].output_bytes

    @cached_property
    def payload_local_minima(self) -> tuple[int, ...]:
        """Boundaries whose payload is a local minimum (candidate cut points)."""
        n = self.layer_count
        sizes = [self.payload_bytes(j) for j in range(n + 1)]
        out = []
        for j in range(n + 1):
            left_ok = j == 0 or sizes[j] <= sizes[j - 1]
            right_ok = j == n or sizes[j] <= sizes[j + 1]
            if left_ok and right_ok:
                out.append(j)
        return tuple(out)


def load_model_spec(path: str | Path) -> ModelSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ProfileParseError(f"{path}: invalid JSON: {e}") from e
    try:
        layers = tuple(
            LayerSpec(float(l["compute_weight"]), int(l["output_bytes"])) for l in doc["layers"]
        )
        return ModelSpec(str(doc["model_id"]), int(doc["input_bytes"]), layers)
    except (KeyError, TypeError) as e:
        raise ProfileParseError(f"{path}: missing or malformed field: {e}") from e


# ---------------------------------------------------------------------------
# device profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviceProfile:
    """Cumulative on-device latency per model: entry p = time to run layers [0, p)."""

    device_id: str
    mobile_latency_ms: dict[str, tuple[float, ...]]

    def __post_init__(self):
        for model_id, cum in self.mobile_latency_ms.items():
            if not cum or cum[0] != 0.0:
                raise ValidationError(
                    f"device {self.device_id!r}, model {model_id!r}: cumulative latency must start at 0"
                )
            if any(b < a for a, b in zip(cum, cum[1:])):
                raise ValidationError(
                    f"device {self.device_id!r}, model {model_id!r}: cumulative latency must be non-decreasing"
                )

    def mobile_ms(self, model_id: str, boundary: int) -> float:
        try:
            cum = self.mobile_latency_ms[model_id]
        except KeyError:
            raise KeyError(f"device {self.device_id!r} has no profile for model {model_id!r}") from None
        return cum[boundary]

    def full_ms(self, model_id: str) -> float:
        cum = self.mobile_latency_ms[model_id]
        return cum[-1]


def load_device_profile(path: str | Path) -> DeviceProfile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        table = {m: tuple(float(x) for x in cum) for m, cum in doc["mobile_latency_ms"].items()}
        return DeviceProfile(str(doc["device_id"]), table)
    except json.JSONDecodeError as e:
        raise ProfileParseError(f"{path}: invalid JSON: {e}") from e
    except (KeyError, TypeError) as e:
        raise ProfileParseError(f"{path}: missing or malformed field: {e}") from e


# ---------------------------------------------------------------------------
# Pareto frontier over the (share, batch) grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoFrontier:
    """Non-dominated (share, batch, latency) triples for one model span.

    Canonical order is share ascending (batch ascending within a share). The
    ``by_lat_*`` views are the same triples sorted by latency for curve
    construction.
    """

    model_id: str
    start: int
    end: int
    shares: np.ndarray
    batches: np.ndarray
    lats: np.ndarray

    @cached_property
    def _lat_order(self) -> np.ndarray:
        return np.lexsort((self.batches, self.shares, self.lats))

    @property
    def by_lat_lats(self) -> np.ndarray:
        return self.lats[self._lat_order]

    @property
    def by_lat_shares(self) -> np.ndarray:
        return self.shares[self._lat_order]

    @property
    def by_lat_batches(self) -> np.ndarray:
        return self.batches[self._lat_order]

    def __len__(self) -> int:
        return len(self.shares)


def pareto_frontier(cost: "CostModel", model_id: str, start: int, end: int) -> ParetoFrontier:
    """Enumerate the share 1..100 x batch 1..batch_max grid and drop dominated triples.

    A triple dominates another when it has <= share, >= batch and <= latency.
    Grid points the model cannot answer (infinite latency) are excluded.
    """
    if start == end:
        empty = np.empty(0)
        return ParetoFrontier(model_id, start, end, empty.astype(np.int64), empty.astype(np.int64), empty)
    batch_max = min(cost.batch_max, 127)  # packed-key layout bounds batches at 127
    batches = np.arange(1, batch_max + 1, dtype=np.int64)
    shares = np.arange(1, 101, dtype=np.int64)
    grid = cost.latency_grid(model_id, start, end, batches, shares)
    bb, rr = np.meshgrid(batches, shares, indexing="ij")
    flat_b = bb.ravel()
    flat_r = rr.ravel()
    flat_l = grid.ravel()
    ok = np.isfinite(flat_l)
    flat_b, flat_r, flat_l = flat_b[ok], flat_r[ok], flat_l[ok]
    keep = kernels.pareto_keep(flat_r, flat_b, flat_l)
    flat_b, flat_r, flat_l = flat_b[keep], flat_r[keep], flat_l[keep]
    order = np.lexsort((flat_b, flat_r))
    return ParetoFrontier(model_id, start, end, flat_r[order], flat_b[order], flat_l[order])


# ---------------------------------------------------------------------------
# cost models
# ---------------------------------------------------------------------------

class CostModel:
    """Interface: latency of span [start, end) at (batch, share), plus a frontier cache."""

    batch_max: int = 32

    def __init__(self):
        self._frontiers: dict[tuple[str, int, int], ParetoFrontier] = {}
        self._frontier_lock = threading.Lock()

    def latency(self, model_id: str, start: int, end: int, batch: int, share: int) -> float:
        raise NotImplementedError

    def latency_grid(self, model_id, start, end, batches, shares) -> np.ndarray:
        # generic (slow) fallback; subclasses vectorize
        out = np.empty((len(batches), len(shares)))
        for i, b in enumerate(batches):
            for j, r in enumerate(shares):
                out[i, j] = self.latency(model_id, start, end, int(b), int(r))
        return out

    def frontier(self, model_id: str, start: int, end: int) -> ParetoFrontier:
        key = (model_id, start, end)
        front = self._frontiers.get(key)
        if front is None:
            front = pareto_frontier(self, model_id, start, end)
            with self._frontier_lock:
                self._frontiers.setdefault(key, front)
                front = self._frontiers[key]
        return front

    def _check_point(self, batch: int, share: int):
        if not 1 <= share <= 100 or int(share) != share:
            raise ValueError(f"gpu share must be an integer in 1..100, got {share}")
        if batch < 1 or int(batch) != batch:
            raise ValueError(f"batch must be a positive integer, got {batch}")


def throughput(cost: CostModel, model_id: str, start: int, end: int, batch: int, share: int) -> float:
    """Requests per second a single instance sustains; empty spans are free (inf)."""
    lat = cost.latency(model_id, start, end, batch, share)
    if lat == 0.0:
        return math.inf
    return 1000.0 * batch / lat


class SyntheticCostModel(CostModel):
    """Closed-form latency: W * (c0 + c1*(batch-1)) * (100/share)**kappa.

    W is the summed compute weight of the span. Latency grows linearly with
    batch and polynomially as the share shrinks.
    """

    def __init__(self, models, c0: float = 1.0, c1: float = 0.25, kappa: float = 0.9, batch_max: int = 32):
        super().__init__()
        if c0 <= 0:
            raise ValidationError("c0 must be > 0")
        if c1 < 0:
            raise ValidationError("c1 must be >= 0")
        if not 0 < kappa <= 2:
            raise ValidationError("kappa must be in (0, 2]")
        if isinstance(models, dict):
            self.models = dict(models)
        else:
            self.models = {m.model_id: m for m in models}
        self.c0 = c0
        self.c1 = c1
        self.kappa = kappa
        self.batch_max = batch_max

    def _model(self, model_id: str) -> ModelSpec:
        try:
            return self.models[model_id]
        except KeyError:
            raise KeyError(f"unknown model {model_id!r}") from None

    def latency(self, model_id, start, end, batch, share):
        self._check_point(batch, share)
        spec = self._model(model_id)
        if not 0 <= start <= end <= spec.layer_count:
            raise ValueError(f"bad span [{start}, {end}) for model {model_id!r}")
        if start == end:
            return 0.0
        w = spec.weight_between(start, end)
        return w * (self.c0 + self.c1 * (batch - 1)) * (100.0 / share) ** self.kappa

    def latency_grid(self, model_id, start, end, batches, shares):
        spec = self._model(model_id)
        if start == end:
            return np.zeros((len(batches), len(shares)))
        w = spec.weight_between(start, end)
        bterm = self.c0 + self.c1 * (np.asarray(batches, dtype=np.float64) - 1.0)
        rterm = (100.0 / np.asarray(shares, dtype=np.float64)) ** self.kappa
        return w * bterm[:, None] * rterm[None, :]


class TableCostModel(CostModel):
    """Measured profile table with conservative interpolation.

    Queries off the measured grid round the batch up and the share down, which
    can only overestimate latency for a monotone table. Sparse tables answer
    with the smallest measured latency among dominating cells (same thing on a
    full grid). Queries nothing dominates are infeasible (inf).
    """

    def __init__(self, rows, batch_max: int = 32):
        super().__init__()
        self.batch_max = batch_max
        spans: dict[tuple[str, int, int], dict[tuple[int, int], float]] = {}
        for model_id, start, end, batch, share, lat in rows:
            spans.setdefault((model_id, start, end), {})[(batch, share)] = lat
        self._tables: dict[tuple[str, int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for key, cells in spans.items():
            batch_vals = np.array(sorted({b for b, _ in cells}), dtype=np.int64)
            share_vals = np.array(sorted({r for _, r in cells}), dtype=np.int64)
            lat = np.full((len(batch_vals), len(share_vals)), np.nan)
            b_idx = {int(b): i for i, b in enumerate(batch_vals)}
            r_idx = {int(r): j for j, r in enumerate(share_vals)}
            for (b, r), v in cells.items():
                lat[b_idx[b], r_idx[r]] = v
            self._validate_monotone(key, batch_vals, share_vals, lat)
            # qmin[i, j] = min latency over measured cells with batch >= batch_vals[i]
            # and share <= share_vals[j]
            qmin = np.where(np.isnan(lat), np.inf, lat)
            qmin = np.minimum.accumulate(qmin[::-1, :], axis=0)[::-1, :]
            qmin = np.minimum.accumulate(qmin, axis=1)
            self._tables[key] = (batch_vals, share_vals, qmin)

    @staticmethod
    def _validate_monotone(key, batch_vals, share_vals, lat):
        violations = []
        for j in range(lat.shape[1]):
            col = lat[:, j]
            meas = np.flatnonzero(~np.isnan(col))
            for a, b in zip(meas, meas[1:]):
                if col[b] < col[a]:
                    violations.append(
                        f"{key}: latency decreases with batch at share {share_vals[j]}"
                        f" (batch {batch_vals[a]} -> {batch_vals[b]}: {col[a]} -> {col[b]})"
                    )
        for i in range(lat.shape[0]):
            row = lat[i, :]
            meas = np.flatnonzero(~np.isnan(row))
            for a, b in zip(meas, meas[1:]):
                if row[b] > row[a]:
                    violations.append(
                        f"{key}: latency increases with share at batch {batch_vals[i]}"
                        f" (share {share_vals[a]} -> {share_vals[b]}: {row[a]} -> {row[b]})"
                    )
        if violations:
            shown = "\n  ".join(violations[:20])
            more = "" if len(violations) <= 20 else f"\n  ... and {len(violations) - 20} more"
            raise ValidationError(f"non-monotone profile table:\n  {shown}{more}")

    def latency(self, model_id, start, end, batch, share):
        self._check_point(batch, share)
        if start == end:
            return 0.0
        table = self._tables.get((model_id, start, end))
        if table is None:
            return math.inf
        batch_vals, share_vals, qmin = table
        i = int(np.searchsorted(batch_vals, batch, side="left"))
        j = int(np.searchsorted(share_vals, share, side="right")) - 1
        if i >= len(batch_vals) or j < 0:
            return math.inf
        return float(qmin[i, j])

    def latency_grid(self, model_id, start, end, batches, shares):
        if start == end:
            return np.zeros((len(batches), len(shares)))
        table = self._tables.get((model_id, start, end))
        if table is None:
            return np.full((len(batches), len(shares)), np.inf)
        batch_vals, share_vals, qmin = table
        bi = np.searchsorted(batch_vals, batches, side="left")
        rj = np.searchsorted(share_vals, shares, side="right") - 1
        out = np.full((len(batches), len(shares)), np.inf)
        bok = bi < len(batch_vals)
        rok = rj >= 0
        if bok.any() and rok.any():
            sub = qmin[np.minimum(bi, len(batch_vals) - 1)[:, None], np.maximum(rj, 0)[None, :]]
            out = np.where(bok[:, None] & rok[None, :], sub, np.inf)
        return out


def load_profiles(path: str | Path, batch_max: int = 32) -> TableCostModel:
    """Parse a profile CSV into a TableCostModel.

    Header: model,start_layer,end_layer,batch,gpu_share,latency_ms.
    Lines starting with '#' are ignored (config echoes round-trip).
    """
    path = Path(path)
    rows = []
    seen: dict[tuple, int] = {}
    with path.open(newline="") as fh:
        filtered = (ln for ln in fh if not ln.lstrip().startswith("#"))
        reader = csv.reader(filtered)
        try:
            header = next(reader)
        except StopIteration:
            raise ProfileParseError(f"{path}: empty profile file") from None
        if [h.strip() for h in header] != PROFILE_HEADER:
            raise ProfileParseError(
                f"{path}: bad header {header!r}, expected {','.join(PROFILE_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise ProfileParseError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                model_id = row[0].strip()
                start, end = int(row[1]), int(row[2])
                batch, share = int(row[3]), int(row[4])
                lat = float(row[5])
            except ValueError as e:
                raise ProfileParseError(f"{path}:{lineno}: {e}") from e
            if not model_id:
                raise ProfileParseError(f"{path}:{lineno}: empty model id")
            if start < 0 or end <= start:
                raise ProfileParseError(f"{path}:{lineno}: bad span [{start}, {end})")
            if batch < 1:
                raise ProfileParseError(f"{path}:{lineno}: batch must be >= 1")
            if not 1 <= share <= 100:
                raise ProfileParseError(f"{path}:{lineno}: gpu_share must be in 1..100")
            if lat <= 0 or not math.isfinite(lat):
                raise ProfileParseError(f"{path}:{lineno}: latency_ms must be finite and > 0")
            key = (model_id, start, end, batch, share)
            if key in seen:
                raise ProfileParseError(
                    f"{path}:{lineno}: duplicate measurement for {key} (first at line {seen[key]})"
                )
            seen[key] = lineno
            rows.append((model_id, start, end, batch, share, lat))
    return TableCostModel(rows, batch_max=batch_max)
