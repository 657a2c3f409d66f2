"""Scenario files: the serving setup a plan or simulation runs against.

A scenario is a JSON document naming the fleet (clients with their device,
model, request rate, SLO, and bandwidth trace), the server pool size, the
re-planning epoch, and the cost model to price server spans with. Relative
paths inside the document resolve against the document's own directory, so a
scenario directory can be moved as a unit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ProfileParseError, ValidationError
from .profiles import (
    CostModel,
    DeviceProfile,
    ModelSpec,
    SyntheticCostModel,
    load_device_profile,
    load_model_spec,
    load_profiles,
)
from .workload import BandwidthTrace, ClientSpec, load_trace


@dataclass(frozen=True)
class Scenario:
    clients: tuple[ClientSpec, ...]
    gpus: int
    epoch_s: float
    models: dict[str, ModelSpec]


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


def _load_trace_field(base: Path, value) -> BandwidthTrace:
    if isinstance(value, str):
        return load_trace(_resolve(base, value))
    # inline [[t_s, mbps], ...]
    try:
        times = tuple(float(t) for t, _ in value)
        mbps = tuple(float(v) for _, v in value)
    except (TypeError, ValueError) as e:
        raise ProfileParseError(f"inline trace must be [[t_s, mbps], ...]: {e}") from e
    return BandwidthTrace(times, mbps)


def _build_cost(doc: dict, base: Path, models: dict[str, ModelSpec]) -> CostModel:
    cost = doc.get("cost", {"kind": "synthetic"})
    kind = cost.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticCostModel(
            models,
            c0=float(cost.get("c0", 1.0)),
            c1=float(cost.get("c1", 0.25)),
            kappa=float(cost.get("kappa", 0.9)),
            batch_max=int(cost.get("batch_max", 32)),
        )
    if kind == "table":
        try:
            path = cost["path"]
        except KeyError:
            raise ProfileParseError("cost kind 'table' needs a 'path'") from None
        return load_profiles(_resolve(base, path), batch_max=int(cost.get("batch_max", 32)))
    raise ProfileParseError(f"unknown cost kind {kind!r}")


def load_scenario(path: str | Path) -> tuple[Scenario, CostModel]:
    """Parse a scenario document; returns the scenario and its cost model."""
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ProfileParseError(f"{path}: invalid JSON: {e}") from e
    except OSError as e:
        raise ProfileParseError(f"{path}: {e}") from e

    try:
        gpus = int(doc["gpus"])
        epoch_s = float(doc.get("epoch_s", 30.0))
        model_refs = doc["models"]
        device_refs = doc["devices"]
        client_docs = doc["clients"]
    except KeyError as e:
        raise ProfileParseError(f"{path}: missing field {e}") from e
    if gpus < 1:
        raise ValidationError(f"{path}: gpus must be >= 1")
    if epoch_s <= 0:
        raise ValidationError(f"{path}: epoch_s must be > 0")

    models: dict[str, ModelSpec] = {}
    aliases: dict[str, ModelSpec] = {}
    for alias, ref in model_refs.items():
        spec = load_model_spec(_resolve(base, ref))
        prior = models.get(spec.model_id)
        if prior is not None and prior != spec:
            raise ValidationError(f"{path}: two model files claim id {spec.model_id!r}")
        models[spec.model_id] = spec
        aliases[alias] = spec

    devices: dict[str, DeviceProfile] = {}
    for alias, ref in device_refs.items():
        devices[alias] = load_device_profile(_resolve(base, ref))

    default_ratio = float(doc.get("slo_ratio", 0.95))
    clients = []
    seen = set()
    for i, cdoc in enumerate(client_docs):
        try:
            cid = str(cdoc["id"])
            model = aliases[cdoc["model"]]
            device = devices[cdoc["device"]]
            rate = float(cdoc["rate_rps"])
            trace = _load_trace_field(base, cdoc["trace"])
        except KeyError as e:
            raise ProfileParseError(f"{path}: client #{i}: missing or unknown {e}") from e
        if cid in seen:
            raise ValidationError(f"{path}: duplicate client id {cid!r}")
        seen.add(cid)
        if "slo_ms" in cdoc:
            slo = float(cdoc["slo_ms"])
        else:
            ratio = float(cdoc.get("slo_ratio", default_ratio))
            slo = ratio * device.full_ms(model.model_id)
        if not math.isfinite(slo):
            raise ValidationError(f"{path}: client {cid!r}: non-finite SLO")
        clients.append(ClientSpec(cid, device, model, rate, slo, trace))

    scenario = Scenario(tuple(clients), gpus, epoch_s, models)
    return scenario, _build_cost(doc, base, models)
