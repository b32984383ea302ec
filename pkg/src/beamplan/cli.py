"""Command line entry point: ``beamplan {plan,simulate,import,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .arraysim import dft_codebook
from .errors import BeamPlanError
from .harness import METHODS, ExperimentConfig, Report, emit_report, run_experiment
from .planner import solve
from .stochastic import build_scenario, derive_process, import_raytrace_csv


def _config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "methods", None):
        data["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "trajectories", None) is not None:
        data["n_trajectories"] = args.trajectories
    if getattr(args, "jobs", None) is not None:
        data["n_jobs"] = args.jobs
    return ExperimentConfig.from_dict(data)


def cmd_plan(args) -> int:
    cfg = _config(args)
    f_book = dft_codebook(cfg.n_bs, cfg.bs_codebook_size)
    w_book = dft_codebook(cfg.n_ue, cfg.ue_codebook_size)
    if args.scenario_csv:
        scenario = import_raytrace_csv(args.scenario_csv)
    else:
        scenario = build_scenario(cfg.scenario_config(), np.random.SeedSequence([cfg.seed, args.trajectory]).spawn(3)[0])
    process = derive_process(scenario, cfg.blockage_model(), f_book, w_book, cfg.L, cfg.max_states)
    plan = solve(process, cfg.planner_config())
    print(plan.to_json(indent=None if args.compact else 1))
    return 0


def cmd_simulate(args) -> int:
    report = run_experiment(_config(args))
    for path in emit_report(report, args.out_dir):
        print(path)
    return 0


def cmd_import(args) -> int:
    scenario = import_raytrace_csv(args.csv)
    text = json.dumps(scenario.to_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_report(args) -> int:
    report = Report.from_json(args.report)
    for path in emit_report(report, args.out_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with ExperimentConfig fields")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("plan", help="solve one scenario and print the plan as JSON")
    common(p)
    p.add_argument("--trajectory", type=int, default=0, help="trajectory index used to seed the scenario")
    p.add_argument("--scenario-csv", help="use an imported ray-trace CSV instead of the synthetic scenario")
    p.add_argument("--compact", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run the experiment and write report files")
    common(p)
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("import", help="convert a ray-trace CSV into scenario JSON")
    p.add_argument("csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("report", help="re-emit report files from a stored report.json")
    p.add_argument("report")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BeamPlanError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
