"""Command-line entry point.

Exit status: 0 success, 1 bad input or usage, 2 solver failure.  Paths of
written results go to stdout; every diagnostic goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .formulation import FormulationError
from .io import (
    InputError,
    emit_report,
    load_inputs,
    read_fixed_caps,
    regenerate,
    write_fixed_caps,
)
from .solver import SolverError
from .workflow import (
    StageAResult,
    WorkflowError,
    all_combos,
    parse_combo,
    run_plan,
    run_stage_a,
    run_stage_b,
    run_stage_c,
    table_combos,
)

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ccsflex", description="Flexibility value of a capture-equipped gas plant.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check an input directory")
    p.add_argument("dir")

    p = sub.add_parser("expand", help="one capacity-expansion cell (with or without the plant)")
    p.add_argument("dir")
    p.add_argument("--no-ccs", action="store_true", help="leave the study plant out")
    p.add_argument("--flex", default="none", help="flexibility combination, e.g. P1+P2")
    p.add_argument("--policy", default=None, help="policy label; default is the first configured")
    p.add_argument("--out", default=None)

    p = sub.add_parser("dispatch", help="one fixed-fleet dispatch cell")
    p.add_argument("dir")
    p.add_argument("--fixed-caps", required=True, help="CSV resource,capacity_mw[,energy_mwh]")
    p.add_argument("--flex", default="none")
    p.add_argument("--policy", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="every (policy, combination) cell of one stage")
    p.add_argument("dir")
    p.add_argument("--stage", required=True, type=str.lower, choices=["a", "b", "c"])
    p.add_argument("--combos", choices=["table", "all"], default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("report", help="rebuild tables from a results.json")
    p.add_argument("results")
    return ap


def _out_dir(arg, base: Path, name: str) -> Path:
    return Path(arg) if arg else base / "results" / name


def _cmd_validate(args) -> int:
    b = load_inputs(args.dir)
    print(f"ok: {len(b.spec.resources)} resources, {b.spec.horizon_hours} hours, {len(b.policies)} policies",
          file=sys.stderr)
    return EXIT_OK


def _cmd_expand(args) -> int:
    b = load_inputs(args.dir)
    pol = b.policy(args.policy)
    combo = parse_combo(args.flex)
    out = _out_dir(args.out, Path(args.dir), "expand-a" if args.no_ccs else "expand-c")
    out.mkdir(parents=True, exist_ok=True)
    if args.no_ccs:
        res = run_stage_a(b.spec, [pol], b.finance, b.solver, b.plant)[pol.label()]
        p = write_fixed_caps(out / "capacities.csv", res.capacities, res.energy)
        (out / "objective.json").write_text(json.dumps({"scenario": pol.label(), "tsc": res.objective}, indent=1) + "\n")
        print(p)
        print(out / "objective.json")
        return EXIT_OK
    plan = b.plan("C", policies=(pol,), combos=(combo,))
    report = run_stage_c(b.spec, plan)
    for f in emit_report(report, out, {"source_hash": b.source_hash}):
        print(f)
    cell = report.cell(pol.label(), combo)
    write_fixed_caps(out / "capacities.csv", cell.capacities, {})
    print(out / "capacities.csv")
    return EXIT_OK


def _cmd_dispatch(args) -> int:
    b = load_inputs(args.dir)
    pol = b.policy(args.policy)
    combo = parse_combo(args.flex)
    caps, energy = read_fixed_caps(args.fixed_caps)
    caps.setdefault(b.plant, b.plant_capacity)
    missing = [n for n in b.spec.names() if n not in caps]
    if missing:
        raise InputError([f"{args.fixed_caps}: no capacity for {missing}"])
    stage_a = {pol.label(): StageAResult(pol, {k: v for k, v in caps.items() if k != b.plant}, energy, float("nan"), None)}
    plan = b.plan("B", policies=(pol,), combos=(combo,), plant_capacity=caps[b.plant])
    report = run_stage_b(b.spec, stage_a, plan)
    out = _out_dir(args.out, Path(args.dir), "dispatch")
    for f in emit_report(report, out, {"source_hash": b.source_hash}):
        print(f)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    b = load_inputs(args.dir)
    over = {}
    if args.combos == "all":
        over["combos"] = tuple(all_combos())
    elif args.combos == "table":
        over["combos"] = tuple(table_combos())
    if args.workers:
        over["workers"] = args.workers
    stage = args.stage.upper()
    out = _out_dir(args.out, Path(args.dir), f"stage-{args.stage}")
    plan = b.plan(stage, **over)
    if stage == "A":
        res = run_stage_a(b.spec, plan.policies, plan.finance, plan.solver, plan.plant, plan.workers)
        out.mkdir(parents=True, exist_ok=True)
        for label, r in res.items():
            print(write_fixed_caps(out / f"capacities_{label}.csv", r.capacities, r.energy))
        return EXIT_OK
    report = run_plan(b.spec, plan)
    for f in emit_report(report, out, {"source_hash": b.source_hash}):
        print(f)
    return EXIT_OK


def _cmd_report(args) -> int:
    p = Path(args.results)
    if not (p / "results.json").exists() and not (p.is_file() and p.suffix == ".json"):
        raise InputError([f"{p}: no results.json found"])
    for f in regenerate(p):
        print(f)
    return EXIT_OK


COMMANDS = {
    "validate": _cmd_validate,
    "expand": _cmd_expand,
    "dispatch": _cmd_dispatch,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.cmd](args)
    except InputError as e:
        for issue in e.issues:
            print(f"error: {issue}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, FormulationError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, WorkflowError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
