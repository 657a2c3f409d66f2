"""Scenario document parsing: references, defaults, and failure modes."""

import json

import pytest

from conftest import SCENARIOS
from fragserve import (
    ProfileParseError,
    SyntheticCostModel,
    ValidationError,
    load_model_spec,
    load_scenario,
)
from fragserve.profiles import TableCostModel


def _write_model(path, model_id, n=3, input_bytes=2000):
    doc = {
        "model_id": model_id,
        "input_bytes": input_bytes,
        "layers": [
            {"compute_weight": 1.0 + 0.5 * i, "output_bytes": 1000 * (i + 1)}
            for i in range(n)
        ],
    }
    path.write_text(json.dumps(doc))


def _write_device(path, device_id, model_ids, n=3):
    cum = [0.0]
    for i in range(n):
        cum.append(cum[-1] + 5.0 + i)
    doc = {"device_id": device_id, "mobile_latency_ms": {m: cum for m in model_ids}}
    path.write_text(json.dumps(doc))


def _scenario_doc(**overrides):
    doc = {
        "gpus": 2,
        "epoch_s": 15,
        "models": {"m": "m.json"},
        "devices": {"d": "d.json"},
        "clients": [
            {"id": "c0", "model": "m", "device": "d", "rate_rps": 10,
             "slo_ms": 14, "trace": [[0.0, 40.0]]},
        ],
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def scenario_dir(tmp_path):
    _write_model(tmp_path / "m.json", "m")
    _write_device(tmp_path / "d.json", "d", ["m"])
    return tmp_path


def _load(scenario_dir, doc):
    path = scenario_dir / "scenario.json"
    path.write_text(json.dumps(doc))
    return load_scenario(path)


def test_fixture_round_trip():
    scenario, cost = load_scenario(SCENARIOS / "slo-guarantee" / "scenario.json")
    assert [c.client_id for c in scenario.clients] == ["c0", "c1", "c2"]
    assert scenario.gpus == 4
    assert scenario.epoch_s == 20.0
    assert set(scenario.models) == {"mnetA", "mnetB", "mnetC"}
    assert isinstance(cost, SyntheticCostModel)
    assert cost.c1 == 0.35
    assert cost.batch_max == 16
    c0 = scenario.clients[0]
    assert c0.slo_ms == 50.0
    assert c0.model.model_id == "mnetA"
    assert c0.trace.mbps[0] == 35.0


def test_relative_paths_resolve_against_the_document(scenario_dir):
    # cwd has no m.json / d.json; only directory-relative resolution works
    doc = _scenario_doc()
    doc["clients"].append({"id": "c1", "model": "m", "device": "d",
                           "rate_rps": 5, "slo_ms": 13, "trace": "bw.csv"})
    (scenario_dir / "bw.csv").write_text("time_s,mbps\n0.0,25.0\n10.0,12.5\n")
    scenario, _ = _load(scenario_dir, doc)
    c1 = scenario.clients[1]
    assert c1.trace.times_s == (0.0, 10.0)
    assert c1.trace.mbps == (25.0, 12.5)


def test_inline_trace(scenario_dir):
    doc = _scenario_doc()
    doc["clients"][0]["trace"] = [[0.0, 40.0], [30.0, 18.0], [60.0, 40.0]]
    scenario, _ = _load(scenario_dir, doc)
    trace = scenario.clients[0].trace
    assert trace.times_s == (0.0, 30.0, 60.0)
    assert trace.mbps == (40.0, 18.0, 40.0)


def test_malformed_inline_trace(scenario_dir):
    doc = _scenario_doc()
    doc["clients"][0]["trace"] = [[0.0], [30.0]]
    with pytest.raises(ProfileParseError, match="inline trace"):
        _load(scenario_dir, doc)


def test_slo_defaults_to_ratio_of_on_device_latency(scenario_dir):
    full = 5.0 + 6.0 + 7.0  # cumulative device table for the 3-layer model
    doc = _scenario_doc()
    del doc["clients"][0]["slo_ms"]
    scenario, _ = _load(scenario_dir, doc)
    assert scenario.clients[0].slo_ms == pytest.approx(0.95 * full)

    doc = _scenario_doc(slo_ratio=0.8)
    del doc["clients"][0]["slo_ms"]
    scenario, _ = _load(scenario_dir, doc)
    assert scenario.clients[0].slo_ms == pytest.approx(0.8 * full)

    # per-client ratio beats the document default
    doc["clients"][0]["slo_ratio"] = 0.5
    scenario, _ = _load(scenario_dir, doc)
    assert scenario.clients[0].slo_ms == pytest.approx(0.5 * full)


def test_explicit_slo_beats_ratio(scenario_dir):
    doc = _scenario_doc(slo_ratio=0.5)
    scenario, _ = _load(scenario_dir, doc)
    assert scenario.clients[0].slo_ms == 14.0


def test_duplicate_client_ids_rejected(scenario_dir):
    doc = _scenario_doc()
    doc["clients"].append(dict(doc["clients"][0]))
    with pytest.raises(ValidationError, match="duplicate client id"):
        _load(scenario_dir, doc)


def test_unknown_model_reference(scenario_dir):
    doc = _scenario_doc()
    doc["clients"][0]["model"] = "nope"
    with pytest.raises(ProfileParseError, match="client #0"):
        _load(scenario_dir, doc)


def test_unknown_device_reference(scenario_dir):
    doc = _scenario_doc()
    doc["clients"][0]["device"] = "nope"
    with pytest.raises(ProfileParseError, match="client #0"):
        _load(scenario_dir, doc)


def test_missing_top_level_field(scenario_dir):
    doc = _scenario_doc()
    del doc["gpus"]
    with pytest.raises(ProfileParseError, match="missing field"):
        _load(scenario_dir, doc)


def test_bounds_checks(scenario_dir):
    with pytest.raises(ValidationError, match="gpus"):
        _load(scenario_dir, _scenario_doc(gpus=0))
    with pytest.raises(ValidationError, match="epoch_s"):
        _load(scenario_dir, _scenario_doc(epoch_s=0))


def test_invalid_json(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text("{not json")
    with pytest.raises(ProfileParseError, match="invalid JSON"):
        load_scenario(path)


def test_two_aliases_one_file_is_fine(scenario_dir):
    # the same spec object under two aliases is not an id clash
    doc = _scenario_doc(models={"m": "m.json", "alias": "m.json"})
    doc["clients"][0]["model"] = "alias"
    scenario, _ = _load(scenario_dir, doc)
    assert scenario.clients[0].model.model_id == "m"
    assert set(scenario.models) == {"m"}


def test_two_files_claiming_one_id_rejected(scenario_dir):
    other = scenario_dir / "m2.json"
    _write_model(other, "m", n=4)
    doc = _scenario_doc(models={"m": "m.json", "m2": "m2.json"})
    with pytest.raises(ValidationError, match="claim id"):
        _load(scenario_dir, doc)


def test_table_cost_kind(scenario_dir):
    spec = load_model_spec(scenario_dir / "m.json")
    synth = SyntheticCostModel({"m": spec}, c0=1.0, c1=0.25, kappa=0.9, batch_max=4)
    lines = ["model,start_layer,end_layer,batch,gpu_share,latency_ms"]
    n = spec.layer_count
    for a in range(n):
        for b in range(a + 1, n + 1):
            for batch in range(1, 5):
                for share in (25, 50, 75, 100):
                    lat = synth.latency("m", a, b, batch, share)
                    lines.append(f"m,{a},{b},{batch},{share},{lat:.6f}")
    (scenario_dir / "profile.csv").write_text("\n".join(lines) + "\n")

    doc = _scenario_doc(cost={"kind": "table", "path": "profile.csv", "batch_max": 4})
    _, cost = _load(scenario_dir, doc)
    assert isinstance(cost, TableCostModel)
    assert cost.batch_max == 4
    assert cost.latency("m", 0, n, 2, 50) == pytest.approx(
        synth.latency("m", 0, n, 2, 50), abs=1e-6)


def test_table_cost_requires_path(scenario_dir):
    with pytest.raises(ProfileParseError, match="path"):
        _load(scenario_dir, _scenario_doc(cost={"kind": "table"}))


def test_unknown_cost_kind(scenario_dir):
    with pytest.raises(ProfileParseError, match="cost kind"):
        _load(scenario_dir, _scenario_doc(cost={"kind": "quadratic"}))
