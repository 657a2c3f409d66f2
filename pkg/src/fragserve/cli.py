"""Command line interface.

Subcommands:
  plan           price a deployment for one scenario at a point in time
  simulate       run the discrete-event simulation and write a report
  compare        simulate several planners and emit a per-epoch metrics CSV
  synth-profile  generate a profile table CSV from model specs
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import FragserveError, InfeasibleError, ProfileParseError, ValidationError
from .grouping import GroupingConfig
from .merging import MergeConfig
from .planners import PLANNERS, plan_static
from .profiles import SyntheticCostModel, load_model_spec, load_profiles
from .realign import RealignConfig
from .scenario import load_scenario
from .simulator import SimConfig, plan_to_dict, simulate
from .workload import generate_epoch


def _add_planning_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("planning")
    g.add_argument("--merge-threshold", type=float, default=0.2,
                   help="close a merge batch when the margin drops to this (inf merges everything)")
    g.add_argument("--budget-tolerance-ms", type=float, default=1.0,
                   help="budget spread allowed inside one merge class")
    g.add_argument("--group-size", type=int, default=5, help="max fragments per planning group")
    g.add_argument("--factor-weights", type=str, default="1,1,1",
                   help="similarity weights for point,budget,rate")
    g.add_argument("--group-seed", type=int, default=0, help="seed for group seeding")
    g.add_argument("--budget-step-ms", type=float, default=1.0,
                   help="granularity of the alignment budget sweep")
    g.add_argument("--instance-cap", type=int, default=None,
                   help="max instances per stage (default unlimited)")
    g.add_argument("--all-layers", action="store_true",
                   help="consider every layer as a re-partition point, not just payload minima")
    g.add_argument("--per-fragment-budgets", action="store_true",
                   help="bound each alignment stage by its own fragment budget")
    g.add_argument("--gpu-capacity", type=int, default=99,
                   help="schedulable share per GPU (also caps per-stage share)")
    g.add_argument("--workers", type=int, default=2, help="planning threads")
    g.add_argument("--profiles", type=str, default=None,
                   help="profile table CSV overriding the scenario's cost model")


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValidationError(f"--factor-weights needs 3 comma-separated numbers, got {text!r}")
    try:
        w = tuple(float(p) for p in parts)
    except ValueError as e:
        raise ValidationError(f"--factor-weights: {e}") from e
    return w  # type: ignore[return-value]


def _configs(args) -> tuple[MergeConfig, GroupingConfig, RealignConfig]:
    merge = MergeConfig(threshold=args.merge_threshold,
                        budget_tolerance_ms=args.budget_tolerance_ms)
    group = GroupingConfig(group_size=args.group_size,
                           factor_weights=_parse_weights(args.factor_weights),
                           seed=args.group_seed)
    realign = RealignConfig(budget_step_ms=args.budget_step_ms,
                            instance_cap=args.instance_cap,
                            all_layers=args.all_layers,
                            per_fragment_budgets=args.per_fragment_budgets,
                            max_share=min(100, args.gpu_capacity))
    return merge, group, realign


def _load(args):
    scenario, cost = load_scenario(args.scenario)
    if args.profiles:
        cost = load_profiles(args.profiles)
    return scenario, cost


def _sim_config(args) -> SimConfig:
    merge, group, realign = _configs(args)
    return SimConfig(horizon_s=args.horizon_s, seed=args.seed, poisson=args.poisson,
                     gpu_capacity=args.gpu_capacity, workers=args.workers,
                     merge_cfg=merge, group_cfg=group, realign_cfg=realign)


def _write_text(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _echo_lines(pairs) -> str:
    return "".join(f"# {k}={v}\n" for k, v in pairs)


# -- plan ---------------------------------------------------------------------

def _cmd_plan(args) -> int:
    scenario, cost = _load(args)
    merge, group, realign = _configs(args)
    cfg = SimConfig(gpu_capacity=args.gpu_capacity, workers=args.workers,
                    merge_cfg=merge, group_cfg=group, realign_cfg=realign)
    if args.planner in ("static", "static-merged"):
        plan = plan_static(scenario.clients, scenario.models, cost, scenario.gpus,
                           args.gpu_capacity, merged=args.planner == "static-merged",
                           cap=realign.instance_cap, max_share=realign.max_share,
                           merge_cfg=merge)
    else:
        wl = generate_epoch(scenario.clients, args.at_s, cost)
        if not wl.fragments:
            raise InfeasibleError("no client admits any feasible partition point")
        from .simulator import _Sim

        plan = _Sim(scenario, cost, args.planner, cfg)._run_planner(wl.fragments)
    doc = {"format_version": 1, "scenario": str(args.scenario), "at_s": args.at_s,
           "gpus": scenario.gpus, "gpu_capacity": args.gpu_capacity}
    doc.update(plan_to_dict(plan))
    _write_text(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.out and args.out != "-":
        print(f"{plan.planner}: resource={plan.total_resource} "
              f"groups={len(plan.groups)} -> {args.out}")
    return 0


# -- simulate -----------------------------------------------------------------

def _cmd_simulate(args) -> int:
    scenario, cost = _load(args)
    report = simulate(scenario, cost, args.planner, _sim_config(args))
    _write_text(args.out, report.to_json())
    if args.requests_csv:
        header = _echo_lines(sorted(report.config.items()))
        Path(args.requests_csv).write_text(header + report.requests_csv())
    if args.out and args.out != "-":
        viol = "n/a" if report.slo_violation_rate is None else f"{report.slo_violation_rate:.4f}"
        print(f"{args.planner}: generated={report.generated} completed={report.completed} "
              f"dropped={report.dropped} slo_violation_rate={viol} -> {args.out}")
    return 0


# -- compare ------------------------------------------------------------------

def _epoch_rows(report, scenario):
    epoch_ms = scenario.epoch_s * 1000.0
    bins: dict[int, list] = {e.epoch: [] for e in report.epochs}
    for client_id, gen, done, deadline, status in report.requests:
        bins.setdefault(int(gen // epoch_ms), []).append((gen, done, deadline, status))
    for rec in report.epochs:
        reqs = bins.get(rec.epoch, [])
        done = [(d - g) for g, d, _, s in reqs if s == "completed"]
        completed = len(done)
        dropped = sum(1 for *_, s in reqs if s == "dropped")
        if completed:
            import numpy as np

            p99 = f"{float(np.percentile(np.array(done), 99)):.6f}"
            viol = sum(1 for g, d, dl, s in reqs if s == "completed" and d > dl + 1e-9)
            viol_s = f"{viol / completed:.6f}"
        else:
            p99 = ""
            viol_s = ""
        drop_s = f"{dropped / len(reqs):.6f}" if reqs else ""
        res = "" if rec.total_resource is None else str(rec.total_resource)
        yield (rec.epoch, report.planner, res, p99, viol_s, drop_s, f"{rec.plan_time_ms:.3f}")


def _cmd_compare(args) -> int:
    scenario, cost = _load(args)
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    for p in planners:
        if p not in PLANNERS:
            raise ValidationError(f"unknown planner {p!r}; choose from {', '.join(PLANNERS)}")
    cfg = _sim_config(args)
    lines = []
    reports = []
    for p in planners:
        reports.append(simulate(scenario, cost, p, cfg))
    pairs = sorted(reports[0].config.items()) if reports else []
    pairs = [(k, v) for k, v in pairs if k != "planner"]
    lines.append(_echo_lines(pairs + [("planners", ",".join(planners))]))
    lines.append("epoch,planner,total_resource,p99_latency_ms,slo_violation_rate,drop_rate,plan_time_ms\n")
    for report in reports:
        for row in _epoch_rows(report, scenario):
            lines.append(",".join(str(x) for x in row) + "\n")
    _write_text(args.out, "".join(lines))
    if args.out and args.out != "-":
        print(f"compared {len(planners)} planners over {len(reports[0].epochs)} epochs -> {args.out}")
    return 0


# -- synth-profile ------------------------------------------------------------

def _cmd_synth_profile(args) -> int:
    models = [load_model_spec(p) for p in args.model]
    cost = SyntheticCostModel(models, c0=args.c0, c1=args.c1, kappa=args.kappa,
                              batch_max=args.batch_max)
    shares = range(args.share_step, 101, args.share_step)
    lines = [_echo_lines([("c0", args.c0), ("c1", args.c1), ("kappa", args.kappa),
                          ("batch_max", args.batch_max), ("share_step", args.share_step),
                          ("spans", args.spans)])]
    lines.append("model,start_layer,end_layer,batch,gpu_share,latency_ms\n")
    for spec in models:
        n = spec.layer_count
        if args.spans == "all":
            spans = [(a, b) for a in range(n) for b in range(a + 1, n + 1)]
        else:
            cuts = sorted(set(spec.payload_local_minima) | {0, n})
            spans = sorted({(a, b) for a in cuts for b in cuts if a < b})
        for a, b in spans:
            for batch in range(1, args.batch_max + 1):
                for share in shares:
                    lat = cost.latency(spec.model_id, a, b, batch, share)
                    lines.append(f"{spec.model_id},{a},{b},{batch},{share},{lat:.6f}\n")
    _write_text(args.out, "".join(lines))
    if args.out and args.out != "-":
        total = sum(ln.count("\n") for ln in lines) - 1 - lines[0].count("\n")
        print(f"wrote {total} measurements for {len(models)} model(s) -> {args.out}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fragserve",
                                 description="plan and simulate shared serving of model fragments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a deployment and write it as JSON")
    p.add_argument("--scenario", required=True)
    p.add_argument("--planner", choices=PLANNERS, default="realign")
    p.add_argument("--at-s", type=float, default=0.0,
                   help="trace time at which clients are partitioned")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    _add_planning_flags(p)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("simulate", help="simulate one planner against a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--planner", choices=PLANNERS, default="realign")
    p.add_argument("--horizon-s", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poisson", action="store_true",
                   help="draw request gaps from an exponential instead of a fixed interval")
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    p.add_argument("--requests-csv", default=None, help="also write per-request records")
    _add_planning_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="simulate several planners, write per-epoch CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--planners", default="realign,independent,merged,static")
    p.add_argument("--horizon-s", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poisson", action="store_true")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    _add_planning_flags(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("synth-profile", help="emit a profile table CSV from model specs")
    p.add_argument("--model", action="append", required=True,
                   help="model spec JSON (repeatable)")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--c1", type=float, default=0.25)
    p.add_argument("--kappa", type=float, default=0.9)
    p.add_argument("--batch-max", type=int, default=32)
    p.add_argument("--share-step", type=int, default=1)
    p.add_argument("--spans", choices=("all", "minima"), default="all",
                   help="which layer spans to measure")
    p.set_defaults(func=_cmd_synth_profile)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FragserveError, ProfileParseError, ValidationError, InfeasibleError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
