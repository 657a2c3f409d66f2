"""CLI coverage: each subcommand end to end, mostly in-process via main()."""

import json
import subprocess
import sys

import pytest

from conftest import SCENARIOS
from fragserve import SyntheticCostModel, load_model_spec, load_profiles
from fragserve.cli import main

SHARED = str(SCENARIOS / "shared-suffix" / "scenario.json")
SLO = str(SCENARIOS / "slo-guarantee" / "scenario.json")


def test_plan_prints_json_to_stdout(capsys):
    assert main(["plan", "--scenario", SHARED]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["planner"] == "realign"
    assert doc["total_resource"] == 73
    assert doc["gpus"] == 4
    stage = doc["groups"][0]["levels"][0]["shared"]
    assert stage["gpu"] is not None and len(stage["gpu"]) == stage["instances"]


def test_plan_independent_baseline(capsys):
    assert main(["plan", "--scenario", SHARED, "--planner", "independent"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["total_resource"] == 242


def test_plan_out_file_and_summary(tmp_path, capsys):
    out = tmp_path / "plan.json"
    assert main(["plan", "--scenario", SHARED, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["total_resource"] == 73
    summary = capsys.readouterr().out
    assert "resource=73" in summary
    assert str(out) in summary


def test_simulate_report_round_trip(tmp_path, capsys):
    out = tmp_path / "report.json"
    csv_path = tmp_path / "requests.csv"
    argv = ["simulate", "--scenario", SLO, "--planner", "independent",
            "--horizon-s", "5", "--out", str(out), "--requests-csv", str(csv_path)]
    assert main(argv) == 0
    doc = json.loads(out.read_text())
    assert doc["planner"] == "independent"
    assert doc["generated"] == doc["completed"] + doc["dropped"] + doc["in_flight"]
    assert doc["dropped"] == 0

    lines = csv_path.read_text().splitlines()
    echo = [ln for ln in lines if ln.startswith("# ")]
    assert any(ln.startswith("# planner=independent") for ln in echo)
    header_idx = len(echo)
    assert lines[header_idx] == "client,gen_ms,done_ms,latency_ms,deadline_ms,status"
    assert len(lines) > header_idx + 1

    summary = capsys.readouterr().out
    assert "dropped=0" in summary


def test_simulate_same_seed_is_byte_identical(tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["simulate", "--scenario", SLO, "--planner", "independent",
                     "--horizon-s", "4", "--poisson", "--seed", "9",
                     "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_compare_csv_shape(capsys):
    argv = ["compare", "--scenario", SLO, "--planners", "independent,static",
            "--horizon-s", "5"]
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    echo = [ln for ln in lines if ln.startswith("# ")]
    assert any(ln == "# planners=independent,static" for ln in echo)
    header = lines[len(echo)]
    assert header == "epoch,planner,total_resource,p99_latency_ms,slo_violation_rate,drop_rate,plan_time_ms"
    rows = [ln.split(",") for ln in lines[len(echo) + 1:]]
    # 5 s horizon and 20 s epochs: one epoch per planner
    assert [r[1] for r in rows] == ["independent", "static"]
    for r in rows:
        assert int(r[0]) == 0
        assert int(r[2]) > 0
        assert float(r[3]) > 0.0  # p99 of a busy epoch
        assert float(r[4]) == 0.0
        assert float(r[5]) == 0.0
        float(r[6])  # plan_time_ms parses


def test_compare_rejects_unknown_planner(capsys):
    rc = main(["compare", "--scenario", SLO, "--planners", "realign,psychic"])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "psychic" in err


def test_synth_profile_round_trip(tmp_path):
    model = SCENARIOS / "slo-guarantee" / "models" / "mnetA.json"
    out = tmp_path / "profile.csv"
    argv = ["synth-profile", "--model", str(model), "--out", str(out),
            "--batch-max", "4", "--share-step", "25"]
    assert main(argv) == 0
    table = load_profiles(out, batch_max=4)
    spec = load_model_spec(model)
    synth = SyntheticCostModel([spec], batch_max=4)
    n = spec.layer_count
    for start, end, batch, share in [(0, n, 1, 100), (2, 5, 4, 25), (n - 1, n, 2, 50)]:
        got = table.latency(spec.model_id, start, end, batch, share)
        want = synth.latency(spec.model_id, start, end, batch, share)
        assert got == pytest.approx(want, abs=1e-6)


def test_missing_scenario_file_exits_1(capsys):
    rc = main(["plan", "--scenario", "no/such/scenario.json"])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_unpartitionable_fleet_exits_1(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({
        "model_id": "m", "input_bytes": 4000,
        "layers": [{"compute_weight": 1.0, "output_bytes": 3000}],
    }))
    (tmp_path / "d.json").write_text(json.dumps({
        "device_id": "d", "mobile_latency_ms": {"m": [0.0, 9.0]},
    }))
    (tmp_path / "scenario.json").write_text(json.dumps({
        "gpus": 1, "epoch_s": 10,
        "models": {"m": "m.json"}, "devices": {"d": "d.json"},
        "clients": [{"id": "c0", "model": "m", "device": "d", "rate_rps": 5,
                     "slo_ms": 0.001, "trace": [[0.0, 40.0]]}],
    }))
    rc = main(["plan", "--scenario", str(tmp_path / "scenario.json")])
    assert rc == 1
    assert "feasible partition" in capsys.readouterr().err


def test_bad_factor_weights_exit_1(capsys):
    rc = main(["plan", "--scenario", SHARED, "--factor-weights", "1,2"])
    assert rc == 1
    assert "factor-weights" in capsys.readouterr().err


def test_console_script_smoke():
    proc = subprocess.run([sys.executable, "-m", "fragserve.cli", "plan",
                           "--scenario", SHARED, "--planner", "merged"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["planner"] == "merged"
