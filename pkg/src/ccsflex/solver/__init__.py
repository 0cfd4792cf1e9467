"""Solvers for :class:`~ccsflex.formulation.Problem`.

Three backends share the :class:`Solution` type: the internal simplex with
branch and bound, an external command driven through LP/solution files, and
an exhaustive enumeration oracle meant for tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..formulation import Problem, row_violations
from .simplex import Basis, SimplexEngine


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    eps_feas: float = 1e-6
    eps_int: float = 1e-5
    mip_gap: float = 1e-4
    abs_gap: float = 1e-6
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    backend: str = "internal"  # internal | external | oracle
    external_command: Optional[str] = None
    oracle_max_integers: int = 24
    branching: str = "most-fractional"  # or "pseudocost"

    def __post_init__(self):
        for name in ("eps_feas", "eps_int", "mip_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.backend not in ("internal", "external", "oracle"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.branching not in ("most-fractional", "pseudocost"):
            raise ValueError(f"unknown branching rule {self.branching!r}")


@dataclass
class Solution:
    status: str  # optimal | infeasible | unbounded | limit
    objective: float
    x: Optional[np.ndarray]
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    stats: dict = field(default_factory=dict)
    bound: Optional[float] = None
    basis: Optional[Basis] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, problem: Problem, name: str) -> float:
        return float(self.x[problem.col_pos[name]])


def make_engine(problem: Problem, opts: Optional[SolverOptions] = None) -> SimplexEngine:
    lo, up = problem.row_bounds
    return SimplexEngine(
        problem.matrix,
        problem.objective,
        problem.col_lower,
        problem.col_upper,
        lo,
        up,
        time_limit=opts.time_limit if opts else None,
    )


def check_solution(problem: Problem, sol: Solution, eps_feas: float = 1e-6) -> list:
    """Row-by-row re-evaluation of ``sol`` against ``problem``; empty list means feasible."""
    if sol.x is None:
        return [("no primal values", np.inf)]
    bad = row_violations(problem, sol.x, eps_feas)
    recomputed = problem.objective_value(sol.x)
    if abs(recomputed - sol.objective) > 1e-6 * max(1.0, abs(recomputed)):
        bad.append(("objective mismatch", recomputed - sol.objective))
    return bad


def solve_lp(problem: Problem, opts: Optional[SolverOptions] = None, engine: Optional[SimplexEngine] = None) -> Solution:
    """Solve the LP relaxation with the internal simplex; integrality is ignored."""
    import time

    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    eng = engine or make_engine(problem, opts)
    res = eng.solve(problem.col_lower, problem.col_upper)
    stats = {"iterations": res.iterations, "nodes": 0, "wall_time": time.perf_counter() - t0}
    if res.status != "optimal":
        return Solution(res.status, np.nan, res.x, stats=stats, basis=res.basis)
    return Solution(
        "optimal",
        res.objective + problem.obj_offset,
        res.x,
        duals=res.duals,
        reduced_costs=res.reduced_costs,
        stats=stats,
        bound=res.objective + problem.obj_offset,
        basis=res.basis,
    )


def solve_milp(problem: Problem, opts: Optional[SolverOptions] = None) -> Solution:
    from .bnb import branch_and_bound

    return branch_and_bound(problem, opts or SolverOptions())


def fix_and_price(problem: Problem, incumbent: Solution, opts: Optional[SolverOptions] = None) -> Solution:
    """Re-solve with every integer column fixed at its incumbent value.

    The returned duals on ``balance[t]`` rows are the hourly prices (before
    dividing by the hour weight).
    """
    import time

    if incumbent.status not in ("optimal", "limit") or incumbent.x is None:
        raise SolverError(f"cannot price a {incumbent.status} solution")
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    ints = problem.col_integer
    lo = problem.col_lower.copy()
    up = problem.col_upper.copy()
    fixed = np.round(incumbent.x[ints])
    lo[ints] = fixed
    up[ints] = fixed
    eng = make_engine(problem, opts)
    res = eng.solve(lo, up, basis=incumbent.basis)
    stats = {"iterations": res.iterations, "nodes": 0, "wall_time": time.perf_counter() - t0}
    if res.status != "optimal":
        return Solution(res.status, np.nan, res.x, stats=stats)
    obj = res.objective + problem.obj_offset
    return Solution("optimal", obj, res.x, res.duals, res.reduced_costs, stats, obj, res.basis)


def solve(problem: Problem, opts: Optional[SolverOptions] = None) -> Solution:
    """Dispatch on ``opts.backend``."""
    opts = opts or SolverOptions()
    if opts.backend == "internal":
        if problem.has_integers:
            return solve_milp(problem, opts)
        return solve_lp(problem, opts)
    if opts.backend == "oracle":
        from .oracle import enumerate_oracle

        return enumerate_oracle(problem, opts)
    from .lpfile import solve_external

    return solve_external(problem, opts)


__all__ = [
    "Solution",
    "SolverOptions",
    "SolverError",
    "check_solution",
    "fix_and_price",
    "make_engine",
    "solve",
    "solve_lp",
    "solve_milp",
]
