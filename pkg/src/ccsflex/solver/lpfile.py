"""File-based bridge to external MILP solvers.

Problems are written in the CPLEX LP text format.  Square brackets are not
legal in LP-format names, so ``vP[ccs,3]`` is written as ``vP(ccs,3)``; the
reader accepts either spelling.  The objective constant is left out of the
file and added back when a solution is read.

Solution files are plain text::

    status optimal
    vP(ccs,1) 350
    commit(ccs,1) 1

Blank lines and ``#`` comments are ignored, columns that are not listed are
taken as zero.  The external command is a template with ``{lp}`` and
``{sol}`` placeholders, taken from the options or from the
``CCSFLEX_LP_SOLVER`` environment variable.
"""
from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np

from ..formulation import Problem
from . import Solution, SolverError, SolverOptions, check_solution

ENV_COMMAND = "CCSFLEX_LP_SOLVER"
STATUSES = ("optimal", "infeasible", "unbounded", "limit")
_MAX_LINE = 250


class SolutionParseError(SolverError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


def lp_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")")


def _num(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _terms(coefs) -> list[str]:
    out = []
    for k, (name, v) in enumerate(coefs):
        sign = "-" if v < 0 else "+"
        mag = repr(abs(float(v)))
        if k == 0:
            out.append(f"{'-' if v < 0 else ''}{mag} {name}")
        else:
            out.append(f"{sign} {mag} {name}")
    return out


def _wrap(head: str, parts: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + 1 + len(p) > _MAX_LINE and cur.strip():
            lines.append(cur)
            cur = "   "
        cur = f"{cur} {p}" if cur else p
    if tail:
        cur = f"{cur} {tail}"
    lines.append(cur)
    return lines


def write_problem_file(p: Problem) -> str:
    """CPLEX LP text for ``p``; identical problems give identical text."""
    names = [lp_name(n) for n in p.col_names]
    lines = ["\\ minimisation problem", f"\\ objective constant {_num(p.obj_offset)} not included", "Minimize"]
    obj = [(names[j], p.objective[j]) for j in np.nonzero(p.objective)[0]]
    if not obj:
        # keep the section well-formed for an all-zero objective
        obj = [(names[0], 0.0)] if names else []
    lines += _wrap(" obj:", _terms(obj))
    lines.append("Subject To")
    A = p.matrix.tocsr()
    for i, rname in enumerate(p.row_names):
        lo_, hi_ = A.indptr[i], A.indptr[i + 1]
        coefs = [(names[j], v) for j, v in zip(A.indices[lo_:hi_], A.data[lo_:hi_])]
        if not coefs:
            coefs = [(names[0], 0.0)]
        tail = f"{p.row_sense[i]} {_num(p.rhs[i])}"
        lines += _wrap(f" {lp_name(rname)}:", _terms(coefs), tail)
    lines.append("Bounds")
    for j, n in enumerate(names):
        lo, up = float(p.col_lower[j]), float(p.col_upper[j])
        if lo == 0.0 and up == math.inf:
            continue
        if lo == -math.inf and up == math.inf:
            lines.append(f" {n} free")
        elif lo == up:
            lines.append(f" {n} = {_num(lo)}")
        else:
            lines.append(f" {_num(lo)} <= {n} <= {_num(up)}")
    ints = [names[j] for j in np.nonzero(p.col_integer)[0]]
    if ints:
        lines.append("Generals")
        lines += _wrap("", ints)
    lines.append("End")
    return "\n".join(lines) + "\n"


def read_solution_file(text: str, p: Problem) -> Solution:
    """Parse solver output in the ``status`` / ``name value`` format."""
    pos = dict(p.col_pos)
    pos.update({lp_name(n): j for n, j in p.col_pos.items()})
    status = None
    x = np.zeros(p.n_cols)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        col0 = len(line) - len(line.lstrip()) + 1
        parts = line.split()
        if status is None:
            if len(parts) != 2 or parts[0].lower() != "status":
                raise SolutionParseError("expected 'status <value>' header", lineno, col0)
            status = parts[1].lower()
            if status not in STATUSES:
                raise SolutionParseError(f"unknown status {parts[1]!r}", lineno, line.index(parts[1]) + 1)
            continue
        if len(parts) != 2:
            raise SolutionParseError(f"expected '<name> <value>', got {len(parts)} fields", lineno, col0)
        name, val = parts
        if name not in pos:
            raise SolutionParseError(f"unknown variable {name!r}", lineno, col0)
        try:
            v = float(val)
        except ValueError:
            raise SolutionParseError(f"bad number {val!r}", lineno, line.index(val, col0 - 1 + len(name)) + 1) from None
        if not math.isfinite(v):
            raise SolutionParseError(f"non-finite value {val!r}", lineno, line.index(val, col0 - 1 + len(name)) + 1)
        j = pos[name]
        if j in seen:
            raise SolutionParseError(f"variable {name!r} listed twice", lineno, col0)
        seen.add(j)
        x[j] = v
    if status is None:
        raise SolutionParseError("missing status header", max(1, len(text.splitlines())), 1)
    if status != "optimal" and not seen:
        return Solution(status, math.nan, None)
    return Solution(status, p.objective_value(x), x)


def resolve_command(opts: SolverOptions) -> str:
    cmd = opts.external_command or os.environ.get(ENV_COMMAND)
    if not cmd:
        raise SolverError(f"no external solver command: set SolverOptions.external_command or ${ENV_COMMAND}")
    return cmd


def solve_external(p: Problem, opts: SolverOptions) -> Solution:
    """Write ``p``, run the configured command, read and check its answer."""
    template = resolve_command(opts)
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="ccsflex-") as tmp:
        lp_path = Path(tmp) / "problem.lp"
        sol_path = Path(tmp) / "problem.sol"
        lp_path.write_text(write_problem_file(p))
        argv = [a.format(lp=str(lp_path), sol=str(sol_path), gap=opts.mip_gap) for a in shlex.split(template)]
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=opts.time_limit)
        if proc.returncode != 0:
            raise SolverError(f"external solver exited with {proc.returncode}: {proc.stderr.strip()[-500:]}")
        if not sol_path.exists():
            raise SolverError("external solver wrote no solution file")
        sol = read_solution_file(sol_path.read_text(), p)
    sol.stats = {"iterations": 0, "nodes": 0, "wall_time": time.perf_counter() - t0}
    if sol.status == "optimal":
        bad = check_solution(p, sol, opts.eps_feas)
        if bad:
            raise SolverError(f"external solution violates {len(bad)} rows, first {bad[0]}")
    return sol
