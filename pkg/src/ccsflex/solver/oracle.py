"""Exhaustive enumeration oracle for tiny MILPs (tests only).

Integer columns are assigned depth-first within their bounds.  A partial
assignment is dropped as soon as interval arithmetic shows some row can no
longer be satisfied.  Each complete assignment fixes the integers and the
remaining LP is solved by HiGHS through :func:`scipy.optimize.linprog`, so
the oracle shares no code with the internal simplex.
"""
from __future__ import annotations

import math
import time

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ..formulation import Problem
from . import Solution, SolverError, SolverOptions


class _ResidualLP:
    def __init__(self, p: Problem):
        A = p.matrix.tocsr()
        lo, up = p.row_bounds
        eq = lo == up
        ub_rows = np.isfinite(up) & ~eq
        lb_rows = np.isfinite(lo) & ~eq
        blocks, rhs = [], []
        if ub_rows.any():
            blocks.append(A[ub_rows])
            rhs.append(up[ub_rows])
        if lb_rows.any():
            blocks.append(-A[lb_rows])
            rhs.append(-lo[lb_rows])
        self.A_ub = sp.vstack(blocks).tocsr() if blocks else None
        self.b_ub = np.concatenate(rhs) if rhs else None
        self.A_eq = A[eq] if eq.any() else None
        self.b_eq = lo[eq] if eq.any() else None
        self.c = p.objective

    def solve(self, lo: np.ndarray, up: np.ndarray):
        bounds = np.column_stack([
            np.where(np.isfinite(lo), lo, -np.inf),
            np.where(np.isfinite(up), up, np.inf),
        ])
        return linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                       bounds=bounds, method="highs")


def _row_possible(Apos, Aneg, lo, up, rlo, rup, tol=1e-9) -> bool:
    min_act = Apos @ lo + Aneg @ up
    max_act = Apos @ up + Aneg @ lo
    scale = 1.0 + np.abs(np.where(np.isfinite(rup), rup, 0.0)) + np.abs(np.where(np.isfinite(rlo), rlo, 0.0))
    return not (np.any(min_act > rup + tol * scale) or np.any(max_act < rlo - tol * scale))


def enumerate_oracle(problem: Problem, opts: SolverOptions | None = None) -> Solution:
    """Exact optimum by enumerating every integer assignment within bounds."""
    opts = opts or SolverOptions()
    ints = np.nonzero(problem.col_integer)[0]
    if len(ints) > opts.oracle_max_integers:
        raise SolverError(f"oracle refuses {len(ints)} integer columns (cap {opts.oracle_max_integers})")
    t0 = time.perf_counter()
    lp = _ResidualLP(problem)
    A = problem.matrix.tocsr()
    Apos = A.maximum(0).tocsr()
    Aneg = A.minimum(0).tocsr()
    rlo, rup = problem.row_bounds
    lo0 = problem.col_lower.astype(float).copy()
    up0 = problem.col_upper.astype(float).copy()
    lo0[ints] = np.ceil(lo0[ints] - 1e-9)
    up0[ints] = np.floor(up0[ints] + 1e-9)
    best = {"obj": math.inf, "x": None, "unbounded": False}
    counts = {"leaves": 0, "pruned": 0}

    def leaf(lo, up):
        counts["leaves"] += 1
        res = lp.solve(lo, up)
        if res.status == 3 or (res.status == 2 and _feasible(lp, lo, up)):
            best["unbounded"] = True
            return
        if res.status != 0:
            return
        if res.fun < best["obj"]:
            best["obj"] = res.fun
            x = res.x.copy()
            x[ints] = lo[ints]
            best["x"] = x

    def dfs(k, lo, up):
        if best["unbounded"]:
            return
        if not _row_possible(Apos, Aneg, lo, up, rlo, rup):
            counts["pruned"] += 1
            return
        if k == len(ints):
            leaf(lo, up)
            return
        j = ints[k]
        for v in range(int(lo0[j]), int(up0[j]) + 1):
            lo2, up2 = lo.copy(), up.copy()
            lo2[j] = up2[j] = v
            dfs(k + 1, lo2, up2)

    if np.all(lo0 <= up0):
        dfs(0, lo0, up0)
    stats = {"iterations": 0, "nodes": counts["leaves"], "pruned": counts["pruned"],
             "wall_time": time.perf_counter() - t0}
    if best["unbounded"]:
        return Solution("unbounded", math.nan, None, stats=stats)
    if best["x"] is None:
        return Solution("infeasible", math.nan, None, stats=stats)
    obj = float(problem.objective @ best["x"]) + problem.obj_offset
    return Solution("optimal", obj, best["x"], stats=stats, bound=obj)


def _feasible(lp: _ResidualLP, lo, up) -> bool:
    res = linprog(np.zeros_like(lp.c), A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq,
                  bounds=np.column_stack([lo, up]), method="highs")
    return res.status == 0
