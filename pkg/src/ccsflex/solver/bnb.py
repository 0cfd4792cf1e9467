"""Branch and bound over the internal simplex.

Nodes are kept in a best-bound priority queue.  The default branches on
the most fractional integer column; ``branching="pseudocost"`` switches
to reliability branching, where columns whose pseudocosts have not been
observed yet are scored by solving both children (strong branching) and
the rest by their average per-unit objective gains.  Each child re-optimises from its parent's
final basis with the dual simplex.  A fractional-diving pass at the root
supplies an early incumbent; every integral LP point is polished by
re-solving with the integers fixed, so incumbents satisfy rows exactly.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time

import numpy as np

from ..formulation import Problem
from . import Solution, SolverOptions, make_engine

RELIABLE = 2  # observations per direction before a pseudocost is trusted
LOOKAHEAD = 8  # strong-branching candidates per node
PATIENCE = 4  # stop strong branching after this many candidates without a better score

class _Search:
    def __init__(self, problem: Problem, opts: SolverOptions):
        self.p = problem
        self.opts = opts
        self.eng = make_engine(problem, opts)
        self.ints = np.nonzero(problem.col_integer)[0]
        lo = problem.col_lower.copy()
        up = problem.col_upper.copy()
        lo[self.ints] = np.ceil(lo[self.ints] - opts.eps_int)
        up[self.ints] = np.floor(up[self.ints] + opts.eps_int)
        self.lo0, self.up0 = lo, up
        self.inc_x = None
        self.inc_obj = math.inf
        self.inc_basis = None
        self.nodes = 0
        self.lp_iters = 0
        self.t0 = time.perf_counter()
        # per-unit objective gains: row 0 down branch, row 1 up branch
        self.psum = np.zeros((2, len(self.ints)))
        self.pcnt = np.zeros((2, len(self.ints)), dtype=int)

    def lp(self, lo_i, up_i, basis):
        lo = self.lo0.copy()
        up = self.up0.copy()
        lo[self.ints] = lo_i
        up[self.ints] = up_i
        if self.opts.time_limit is not None:
            # each LP may only use what is left of the overall budget
            self.eng.time_limit = max(self.opts.time_limit - (time.perf_counter() - self.t0), 0.0)
        res = self.eng.solve(lo, up, basis=basis)
        self.lp_iters += res.iterations
        return res

    def fractionality(self, x):
        v = x[self.ints]
        return np.abs(v - np.round(v))

    def cutoff(self) -> float:
        if not math.isfinite(self.inc_obj):
            return math.inf
        return self.inc_obj - max(self.opts.abs_gap, self.opts.mip_gap * abs(self.inc_obj + self.p.obj_offset))

    def try_incumbent(self, res):
        """Polish an integral LP point and keep it if it improves the incumbent."""
        v = np.round(res.x[self.ints])
        polished = self.lp(v, v, res.basis)
        if polished.status != "optimal":
            return False
        improves = not math.isfinite(self.inc_obj) or (
            polished.objective < self.inc_obj - 1e-12 * max(1.0, abs(self.inc_obj)))
        if improves:
            x = polished.x.copy()
            x[self.ints] = v
            self.inc_x = x
            self.inc_obj = polished.objective
            self.inc_basis = polished.basis
            return True
        return False

    def learn(self, k: int, side: int, dist: float, parent_obj: float, child) -> None:
        if child.status == "optimal" and dist > 1e-9:
            self.psum[side, k] += max(child.objective - parent_obj, 0.0) / dist
            self.pcnt[side, k] += 1

    def child(self, lo_i, up_i, k: int, side: int, v: float, basis):
        lo2, up2 = lo_i.copy(), up_i.copy()
        if side == 0:
            up2[k] = math.floor(v)
        else:
            lo2[k] = math.ceil(v)
        return lo2, up2, self.lp(lo2, up2, basis)

    def choose(self, res, lo_i, up_i, frac):
        """Pick the branching column; returns it with any children already solved."""
        if self.opts.branching == "most-fractional":
            return int(np.argmax(frac)), {}
        cand = np.nonzero(frac > self.opts.eps_int)[0]
        v = res.x[self.ints]
        dist = np.stack([v - np.floor(v), np.ceil(v) - v])
        seen = self.pcnt > 0
        avg = np.array([self.psum[i][seen[i]].sum() / max(self.pcnt[i][seen[i]].sum(), 1) if seen[i].any() else 1.0
                        for i in (0, 1)])
        psi = np.where(self.pcnt > 0, self.psum / np.maximum(self.pcnt, 1), avg[:, None])
        gain = np.maximum(psi * dist, 1e-6)
        score = gain[0] * gain[1]
        unreliable = cand[self.pcnt[:, cand].min(axis=0) < RELIABLE]
        unreliable = unreliable[np.argsort(-frac[unreliable], kind="stable")]
        best, best_score, solved, idle = None, -math.inf, {}, 0
        for k in unreliable[:LOOKAHEAD]:
            kids = {}
            for side in (0, 1):
                kids[side] = self.child(lo_i, up_i, k, side, v[k], res.basis)
                self.learn(k, side, dist[side, k], res.objective, kids[side][2])
            dead = [kids[sd][2].status != "optimal" or kids[sd][2].objective >= self.cutoff() for sd in (0, 1)]
            if any(dead):
                return int(k), kids  # one side closes immediately
            g = [max(kids[sd][2].objective - res.objective, 1e-6) for sd in (0, 1)]
            solved[int(k)] = (g[0] * g[1], kids)
            if g[0] * g[1] > best_score:
                best, best_score, idle = int(k), g[0] * g[1], 0
            else:
                idle += 1
                if idle >= PATIENCE:
                    break
        rest = np.setdiff1d(cand, np.fromiter(solved, int, len(solved)))
        if rest.size:
            k = int(rest[np.argmax(score[rest])])
            if score[k] > best_score:
                return k, {}
        return best, solved[best][1]

    def out_of_budget(self) -> bool:
        o = self.opts
        if o.node_limit is not None and self.nodes >= o.node_limit:
            return True
        if o.time_limit is not None and time.perf_counter() - self.t0 > o.time_limit:
            return True
        return False

    def dive(self, lo_i, up_i, res, max_steps: int):
        lo_i, up_i = lo_i.copy(), up_i.copy()
        for _ in range(max_steps):
            if self.out_of_budget():
                return
            frac = self.fractionality(res.x)
            if frac.max() <= self.opts.eps_int:
                self.try_incumbent(res)
                return
            v = res.x[self.ints]
            cand = np.nonzero(frac > self.opts.eps_int)[0]
            k = cand[np.argmin(frac[cand])]
            nearest = np.round(v[k])
            other = math.floor(v[k]) if nearest > v[k] else math.ceil(v[k])
            nxt = None
            for target in (nearest, other):
                lo2, up2 = lo_i.copy(), up_i.copy()
                lo2[k] = up2[k] = target
                r2 = self.lp(lo2, up2, res.basis)
                if r2.status == "optimal" and r2.objective < self.cutoff():
                    nxt = (lo2, up2, r2)
                    break
            if nxt is None:
                return
            lo_i, up_i, res = nxt


def branch_and_bound(problem: Problem, opts: SolverOptions) -> Solution:
    s = _Search(problem, opts)
    off = problem.obj_offset
    if np.any(s.lo0 > s.up0):
        return Solution("infeasible", math.nan, None, stats=_stats(s))
    root = s.lp(s.lo0[s.ints], s.up0[s.ints], None)
    if root.status != "optimal":
        return Solution(root.status, math.nan, None, stats=_stats(s))
    if len(s.ints) == 0:
        return Solution("optimal", root.objective + off, root.x, root.duals, root.reduced_costs,
                        _stats(s), root.objective + off, root.basis)
    root_bound = root.objective
    s.dive(s.lo0[s.ints], s.up0[s.ints], root, max_steps=len(s.ints) + 1)

    counter = itertools.count()
    heap = [(root.objective, 0, next(counter), s.lo0[s.ints].copy(), s.up0[s.ints].copy(), root)]
    best_bound = root_bound
    status = "optimal"
    unresolved = math.inf  # lowest bound among subtrees whose LP gave up
    while heap:
        bound, negdepth, _, lo_i, up_i, res = heapq.heappop(heap)
        best_bound = bound
        if bound >= s.cutoff():
            heap = []
            break
        if s.out_of_budget():
            heapq.heappush(heap, (bound, negdepth, next(counter), lo_i, up_i, res))
            status = "limit"
            break
        if res is None:
            res = s.lp(lo_i, up_i, None)
            if res.status == "infeasible":
                continue
            if res.status != "optimal":
                unresolved = min(unresolved, bound)
                continue
            if res.objective >= s.cutoff():
                continue
        s.nodes += 1
        frac = s.fractionality(res.x)
        if frac.max() <= opts.eps_int:
            s.try_incumbent(res)
            continue
        k, ready = s.choose(res, lo_i, up_i, frac)
        v = res.x[s.ints[k]]
        for side in (0, 1):
            if side in ready:
                lo2, up2, child = ready[side]
            else:
                lo2, up2, child = s.child(lo_i, up_i, k, side, v, res.basis)
                s.learn(k, side, (v - math.floor(v)) if side == 0 else (math.ceil(v) - v), res.objective, child)
            if child.status == "infeasible":
                continue
            if child.status != "optimal":
                # LP stopped early: keep the subtree open under the parent's bound
                heapq.heappush(heap, (res.objective, negdepth - 1, next(counter), lo2, up2, None))
                continue
            if child.objective >= s.cutoff():
                continue
            if s.fractionality(child.x).max() <= opts.eps_int:
                s.try_incumbent(child)
                continue
            heapq.heappush(heap, (child.objective, negdepth - 1, next(counter), lo2, up2, child))
        if s.nodes % 200 == 0 and heap:
            # periodic dive from the best open node
            b, _, _, l2, u2, r2 = heap[0]
            s.dive(l2, u2, r2, max_steps=len(s.ints) + 1)
    if heap:
        best_bound = min(best_bound, heap[0][0])
    if unresolved < s.cutoff():
        best_bound = min(best_bound, unresolved)
        status = "limit"
    stats = _stats(s)
    if s.inc_x is None:
        if status == "limit":
            return Solution("limit", math.nan, None, stats=stats, bound=best_bound + off)
        return Solution("infeasible", math.nan, None, stats=stats)
    bound_val = min(best_bound, s.inc_obj) + off
    stats["gap"] = (s.inc_obj + off - bound_val) / max(abs(s.inc_obj + off), 1e-10)
    return Solution(status, s.inc_obj + off, s.inc_x, stats=stats, bound=bound_val, basis=s.inc_basis)


def _stats(s: _Search) -> dict:
    return {
        "iterations": s.lp_iters,
        "nodes": s.nodes,
        "wall_time": time.perf_counter() - s.t0,
    }
