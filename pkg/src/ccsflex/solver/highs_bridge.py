"""Command-line adapter that lets HiGHS act as the external LP-file solver.

Usage::

    python -m ccsflex.solver.highs_bridge problem.lp problem.sol [--mip-gap G]

so a matching command template is
``python3 -m ccsflex.solver.highs_bridge {lp} {sol} --mip-gap {gap}``.
Needs the optional ``highspy`` package.
"""
from __future__ import annotations

import argparse
import sys


def _status_word(h, highspy) -> str:
    ms = h.getModelStatus()
    S = highspy.HighsModelStatus
    if ms == S.kOptimal:
        return "optimal"
    if ms == S.kInfeasible:
        return "infeasible"
    if ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return "unbounded"
    return "limit"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="highs_bridge")
    ap.add_argument("lp")
    ap.add_argument("sol")
    ap.add_argument("--mip-gap", type=float, default=1e-4)
    ap.add_argument("--time-limit", type=float, default=None)
    args = ap.parse_args(argv)
    try:
        import highspy
    except ImportError:
        print("highspy is not installed", file=sys.stderr)
        return 3
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", args.mip_gap)
    h.setOptionValue("threads", 1)
    if args.time_limit:
        h.setOptionValue("time_limit", args.time_limit)
    if h.readModel(args.lp) != highspy.HighsStatus.kOk:
        print(f"could not read {args.lp}", file=sys.stderr)
        return 4
    h.run()
    status = _status_word(h, highspy)
    lines = [f"status {status}"]
    if h.getInfo().primal_solution_status == 2:
        names = h.getLp().col_names_
        values = h.getSolution().col_value
        lines += [f"{n} {v!r}" for n, v in zip(names, values)]
    with open(args.sol, "w") as f:
        f.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
