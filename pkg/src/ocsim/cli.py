"""Experiment orchestration CLI: run one scenario, sweep the architecture
matrix, compare completed runs.

Exit codes: 0 success, 2 validation/usage failure, 3 runtime fault.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

from . import metrics as met
from . import model
from .kernel import export_trace_jsonl
from .plots import emit_plots
from .runner import run_scenario

ARCH_FIELDS = ("observer_arch", "info_level", "controller_arch")


def config_hashes(config: model.ScenarioConfig):
    d = model.scenario_to_dict(config)
    full = hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
    base_d = {k: v for k, v in d.items() if k not in ARCH_FIELDS}
    base = hashlib.sha256(json.dumps(base_d, sort_keys=True).encode()).hexdigest()
    return full, base


def _output_root(args_out):
    if args_out:
        return args_out
    return os.environ.get("OCSIM_OUTPUT_ROOT", "runs")


def execute_run(config, out_dir, scenario_path="", tick_cap=None, run_id=None) -> dict:
    """Run a validated scenario and write the five run artifacts: trace,
    records CSV, evaluation JSON, plots directory, manifest."""
    os.makedirs(out_dir, exist_ok=True)
    full_hash, base_hash = config_hashes(config)
    run_id = run_id or f"{config.seed}-{config.observer_arch}-L{config.info_level}-{config.controller_arch}"
    manifest = {"run_id": run_id, "scenario_path": str(scenario_path),
                "config_hash": full_hash, "base_hash": base_hash,
                "output_dir": str(out_dir), "status": "running"}
    kwargs = {}
    if tick_cap:
        kwargs["tick_cap"] = tick_cap
    result = run_scenario(config, **kwargs)
    export_trace_jsonl(result.trace, os.path.join(out_dir, "trace.jsonl"))
    met.export_csv(result.records, result.evaluation, os.path.join(out_dir, "records.csv"))
    extra = {
        "reports": [{"suspect": r.suspect, "first_flagged_interval": r.first_flagged_interval,
                     "score": r.score, "detector": r.detector,
                     "scope": r.scope.describe() if r.scope else None}
                    for r in result.reports],
        "actions": [{"kind": a.kind, "issuer": a.issuer, "issued_tick": a.issued_tick,
                     "target": a.target, "unit_id": a.unit_id, "new_owner": a.new_owner}
                    for a in result.actions],
        "blacklist": sorted(result.blacklist),
        "gossip_completion_tick": result.gossip_completion_tick,
        "control_tick": result.control_tick,
    }
    met.export_evaluation_json(result.evaluation, result.margins,
                               os.path.join(out_dir, "evaluation.json"), extra=extra)
    emit_plots(result.records, result.margins, os.path.join(out_dir, "plots"),
               incident=config.incident_interval, control=config.control_interval)
    manifest["status"] = "completed"
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def cmd_run(args) -> int:
    config = model.load_scenario(args.scenario)
    if args.seed is not None:
        config.seed = args.seed
    violations = model.validate_scenario(config)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    out_dir = _output_root(args.out)
    try:
        manifest = execute_run(config, out_dir, scenario_path=args.scenario,
                               tick_cap=args.tick_cap)
    except Exception as exc:  # runtime fault contract
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 3
    print(f"run {manifest['run_id']} completed -> {out_dir}")
    return 0


def _parse_list(value, cast=str):
    return [cast(x) for x in value.split(",") if x] if value else []


def cmd_sweep(args) -> int:
    base = model.load_scenario(args.scenario)
    if args.seed is not None:
        base.seed = args.seed
    violations = model.validate_scenario(base)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    observers = _parse_list(args.observer) or [base.observer_arch]
    levels = _parse_list(args.level, int) or [base.info_level]
    controllers = _parse_list(args.controller) or [base.controller_arch]
    if args.empty:
        observers, levels, controllers = [], [], []
    out_root = _output_root(args.out)
    os.makedirs(out_root, exist_ok=True)
    summary = []
    for ob in observers:
        for lv in levels:
            for ct in controllers:
                cell = copy.deepcopy(base)
                cell.observer_arch, cell.info_level, cell.controller_arch = ob, lv, ct
                cell_violations = model.validate_scenario(cell)
                cell_id = f"{ob}-L{lv}-{ct}"
                cell_dir = os.path.join(out_root, cell_id)
                row = {"cell": cell_id, "observer": ob, "level": lv, "controller": ct}
                try:
                    if cell_violations:
                        raise ValueError("; ".join(cell_violations))
                    manifest = execute_run(cell, cell_dir, scenario_path=args.scenario,
                                           tick_cap=args.tick_cap, run_id=cell_id)
                    with open(os.path.join(cell_dir, "evaluation.json")) as f:
                        ev = json.load(f)
                    compromised = [a["agent_id"] for a in model.scenario_to_dict(cell)["agents"]
                                   if a["is_compromised"]]
                    row["status"] = manifest["status"]
                    row["detected"] = any(r["suspect"] in compromised for r in ev["reports"])
                    for phase in met.PHASES:
                        for m in met.METRICS:
                            row[f"{phase}.{m}.out_fraction"] = \
                                ev["evaluation"]["per_phase"][phase][m]["out_fraction"]
                except Exception as exc:
                    row["status"] = f"failed: {exc}"
                    row["detected"] = ""
                summary.append(row)
    columns = ["cell", "observer", "level", "controller", "status", "detected"]
    columns += [f"{p}.{m}.out_fraction" for p in met.PHASES for m in met.METRICS]
    summary_path = os.path.join(out_root, "summary.csv")
    with open(summary_path, "w") as f:
        f.write(",".join(columns) + "\n")
        for row in summary:
            f.write(",".join(str(row.get(c, "")) for c in columns) + "\n")
    print(f"sweep: {len(summary)} cells -> {summary_path}")
    for row in summary:
        print(f"  {row['cell']}: status={row['status']} detected={row['detected']}")
    return 0


def cmd_compare(args) -> int:
    runs = []
    for d in args.run_dirs:
        try:
            with open(os.path.join(d, "manifest.json")) as f:
                manifest = json.load(f)
            with open(os.path.join(d, "evaluation.json")) as f:
                ev = json.load(f)
        except OSError as exc:
            print(f"refused: cannot read run dir {d}: {exc}", file=sys.stderr)
            return 2
        runs.append((d, manifest, ev))
    if len(runs) < 2:
        print("refused: need at least 2 run dirs", file=sys.stderr)
        return 2
    for d, manifest, _ in runs:
        if manifest["status"] != "completed":
            print(f"refused: run {d} is not completed", file=sys.stderr)
            return 2
    base_hashes = {m["base_hash"] for _, m, _ in runs}
    if len(base_hashes) != 1:
        print("refused: runs have different base scenarios (only architecture "
              "fields may differ)", file=sys.stderr)
        return 2
    print(f"comparison of {len(runs)} runs (shared base {base_hashes.pop()[:12]}):")
    for phase in met.PHASES:
        print(f"  phase {phase}:")
        for m in met.METRICS:
            line = []
            for d, manifest, ev in runs:
                a = ev["evaluation"]["per_phase"][phase][m]
                line.append(f"{manifest['run_id']}: out={a['out']}/{a['total']}"
                            f" (above={a['above']})")
            print(f"    {m}: " + " | ".join(line))
    identical = len({json.dumps(ev["evaluation"], sort_keys=True) for _, _, ev in runs}) == 1
    print("no differences" if identical else "runs differ (see table above)")
    return 0


def cmd_init(args) -> int:
    config = model.generate_default_scenario(args.seed, args.agents)
    if args.controller:
        config.controller_arch = args.controller
    model.save_scenario(config, args.scenario)
    print(f"wrote default scenario ({args.agents} agents, seed {args.seed}) -> {args.scenario}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ocsim",
                                     description="Agent-based energy community simulator with "
                                                 "observer/controller robustness architectures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tick-cap", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the observer x level x controller matrix")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--observer", default="")
    p.add_argument("--level", default="")
    p.add_argument("--controller", default="")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tick-cap", type=int, default=None)
    p.add_argument("--empty", action="store_true", help="run an empty matrix")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare completed runs sharing a base scenario")
    p.add_argument("run_dirs", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("init", help="write a default scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--agents", type=int, default=8)
    p.add_argument("--controller", default="")
    p.set_defaults(func=cmd_init)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
