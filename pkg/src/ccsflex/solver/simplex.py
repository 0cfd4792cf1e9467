"""Revised bounded-variable simplex.

Rows are turned into equalities with one logical column each,
``A x - r = 0``, where the logical ``r_i`` carries the row's bounds.  The
basis inverse is a sparse LU factor of the basis matrix followed by a file
of product-form eta updates; it is refactorised every ``refactor_every``
pivots.

Primal simplex runs a composite phase 1 (minimise the sum of bound
violations of basic variables, recomputed each iteration) and phase 2 with
Dantzig pricing and a Harris two-pass ratio test.  After a run of
degenerate pivots the pricing switches to Bland's rule until a pivot makes
progress.  Dual simplex is used to reoptimise from a dual-feasible basis
after bounds change (branch and bound).
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3


@dataclass
class Basis:
    head: np.ndarray  # variable index basic in each row position
    status: np.ndarray  # per variable (structurals then logicals)

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded | limit
    x: Optional[np.ndarray]
    objective: float
    duals: Optional[np.ndarray]
    reduced_costs: Optional[np.ndarray]
    row_activity: Optional[np.ndarray]
    iterations: int
    basis: Optional[Basis]


class SingularBasis(Exception):
    pass


class _Factor:
    def __init__(self, B: sp.csc_matrix):
        try:
            self.lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:  # exactly singular
            raise SingularBasis(str(exc)) from exc
        self.etas: list = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self.lu.solve(v)
        for r, idx, vals, piv in self.etas:
            xr = x[r] / piv
            if xr != 0.0:
                x[idx] -= vals * xr
            x[r] = xr
        return x

    def btran(self, v: np.ndarray) -> np.ndarray:
        v = v.copy()
        for r, idx, vals, piv in reversed(self.etas):
            v[r] = (v[r] - v[idx] @ vals) / piv
        return self.lu.solve(v, trans="T")

    def update(self, r: int, alpha: np.ndarray):
        nz = np.nonzero(alpha)[0]
        nz = nz[nz != r]
        self.etas.append((r, nz, alpha[nz].copy(), alpha[r]))


def _segment_max(data: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Max over each compressed row/column; 1 for empty segments."""
    empty = np.diff(indptr) == 0
    if data.size == 0:
        return np.ones(len(indptr) - 1)
    starts = np.minimum(indptr[:-1], data.size - 1)
    out = np.maximum.reduceat(data, starts)
    return np.where(empty, 1.0, out)


def _geometric_scale(A: sp.csr_matrix, passes: int = 4):
    m, n = A.shape
    R = np.ones(m)
    C = np.ones(n)
    if A.nnz == 0:
        return R, C
    absA = abs(A).tocsr()
    absA.eliminate_zeros()
    for _ in range(passes):
        S = (sp.diags(R) @ absA @ sp.diags(C)).tocsr()
        rmax = _segment_max(S.data, S.indptr)
        rmin = 1.0 / _segment_max(1.0 / S.data, S.indptr)
        R = R / np.sqrt(rmax * rmin)
        S = (sp.diags(R) @ absA @ sp.diags(C)).tocsc()
        cmax = _segment_max(S.data, S.indptr)
        cmin = 1.0 / _segment_max(1.0 / S.data, S.indptr)
        C = C / np.sqrt(cmax * cmin)
    # powers of two keep scaling exact
    R = 2.0 ** np.round(np.log2(R))
    C = 2.0 ** np.round(np.log2(C))
    return R, C


class SimplexEngine:
    """Holds a scaled LP and solves it repeatedly under changing column bounds."""

    def __init__(
        self,
        A: sp.spmatrix,
        c: np.ndarray,
        lb: np.ndarray,
        ub: np.ndarray,
        row_lo: np.ndarray,
        row_up: np.ndarray,
        *,
        scale: bool = True,
        feas_tol: float = 1e-9,
        opt_tol: float = 1e-9,
        pivot_tol: float = 1e-9,
        refactor_every: int = 60,
        degenerate_limit: int = 40,
        max_iter: Optional[int] = None,
        time_limit: Optional[float] = None,
    ):
        A = sp.csr_matrix(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        if scale and A.nnz:
            R, C = _geometric_scale(A)
        else:
            R, C = np.ones(m), np.ones(n)
        c = np.asarray(c, float)
        cmax = np.max(np.abs(c * C)) if n else 0.0
        self.sigma = 1.0 / cmax if cmax > 0 else 1.0
        self.R, self.C = R, C
        As = (sp.diags(R) @ A @ sp.diags(C)).tocsc()
        self.A_full = sp.hstack([As, -sp.identity(m, format="csc")], format="csc")
        self.AT = self.A_full.T.tocsr()
        self._indptr = self.A_full.indptr
        self._indices = self.A_full.indices
        self._data = self.A_full.data
        self.cost = np.concatenate([c * C * self.sigma, np.zeros(m)])
        self.c_orig = c
        self._row_lo = np.asarray(row_lo, float) * R
        self._row_up = np.asarray(row_up, float) * R
        self.base_lb = np.asarray(lb, float)
        self.base_ub = np.asarray(ub, float)
        self.ftol = feas_tol
        self.dtol = opt_tol
        self.ptol = pivot_tol
        self.refactor_every = refactor_every
        self.degenerate_limit = degenerate_limit
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 1000
        self.time_limit = time_limit
        self.total_iterations = 0

    # ---- setup -------------------------------------------------------
    def _set_bounds(self, lb, ub):
        lb = self.base_lb if lb is None else np.asarray(lb, float)
        ub = self.base_ub if ub is None else np.asarray(ub, float)
        with np.errstate(invalid="ignore"):
            self.lo = np.concatenate([lb / self.C, self._row_lo])
            self.up = np.concatenate([ub / self.C, self._row_up])

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        s, e = self._indptr[j], self._indptr[j + 1]
        col[self._indices[s:e]] = self._data[s:e]
        return col

    def _nonbasic_value(self, j: int, st: int) -> tuple[int, float]:
        lo, up = self.lo[j], self.up[j]
        if st == AT_UPPER and np.isfinite(up):
            return AT_UPPER, up
        if np.isfinite(lo):
            return AT_LOWER, lo
        if np.isfinite(up):
            return AT_UPPER, up
        return AT_ZERO, 0.0

    def _slack_basis(self):
        n, m = self.n, self.m
        self.head = np.arange(n, n + m)
        self.status = np.empty(n + m, dtype=np.int8)
        self.x = np.zeros(n + m)
        lo, up = self.lo[:n], self.up[:n]
        st = np.where(np.isfinite(lo), AT_LOWER, np.where(np.isfinite(up), AT_UPPER, AT_ZERO))
        self.status[:n] = st
        self.x[:n] = np.where(st == AT_LOWER, lo, np.where(st == AT_UPPER, up, 0.0))
        self.status[n:] = BASIC

    def _install(self, basis: Basis):
        self.head = basis.head.copy()
        self.status = basis.status.copy()
        self.x = np.zeros(self.n + self.m)
        lo, up = self.lo, self.up
        nb = self.status != BASIC
        st = self.status
        fin_lo = np.isfinite(lo)
        fin_up = np.isfinite(up)
        new = np.where(
            (st == AT_UPPER) & fin_up, AT_UPPER,
            np.where(fin_lo, AT_LOWER, np.where(fin_up, AT_UPPER, AT_ZERO)),
        ).astype(np.int8)
        st[nb] = new[nb]
        vals = np.where(st == AT_LOWER, lo, np.where(st == AT_UPPER, up, 0.0))
        self.x[nb] = vals[nb]

    def _refactor(self):
        B = self.A_full[:, self.head]
        try:
            self.factor = _Factor(B.tocsc())
        except SingularBasis:
            self._repair_basis()
        self._recompute_xb()

    def _repair_basis(self):
        """Fall back to the all-logical basis, snapping structurals to a bound."""
        n = self.n
        xs = self.x[:n]
        lo, up = self.lo[:n], self.up[:n]
        near_up = np.isfinite(up) & (~np.isfinite(lo) | (np.abs(up - xs) < np.abs(xs - lo)))
        st = np.where(near_up, AT_UPPER, np.where(np.isfinite(lo), AT_LOWER, AT_ZERO)).astype(np.int8)
        self.status[:n] = st
        self.x[:n] = np.where(st == AT_LOWER, lo, np.where(st == AT_UPPER, up, 0.0))
        self.head = np.arange(n, n + self.m)
        self.status[n:] = BASIC
        self.factor = _Factor(self.A_full[:, self.head].tocsc())

    def _recompute_xb(self):
        xn = self.x.copy()
        xn[self.head] = 0.0
        rhs = -(self.A_full @ xn)
        self.x[self.head] = self.factor.ftran(rhs)

    # ---- pricing helpers -------------------------------------------
    def _reduced_costs(self, cB, cfull) -> np.ndarray:
        y = self.factor.btran(cB)
        d = cfull - self.AT @ y
        d[self.head] = 0.0
        return d

    def _check_limits(self, t0):
        if self.iters >= self.max_iter:
            return True
        if self.time_limit is not None and (self.iters & 31) == 0 and time.perf_counter() - t0 > self.time_limit:
            return True
        return False

    # ---- primal simplex ----------------------------------------------
    def _primal(self, t0) -> str:
        degenerate = 0
        bland = False
        zeros = np.zeros(self.n + self.m)
        movable = self.up > self.lo
        while True:
            if self._check_limits(t0):
                return "limit"
            if len(self.factor.etas) >= self.refactor_every:
                self._refactor()
            head = self.head
            xB = self.x[head]
            loB, upB = self.lo[head], self.up[head]
            below = xB < loB - self.ftol
            above = xB > upB + self.ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                d = self._reduced_costs(cB, zeros)
            else:
                d = self._reduced_costs(self.cost[head], self.cost)
            st = self.status
            inc = ((st == AT_LOWER) | (st == AT_ZERO)) & movable & (d < -self.dtol)
            dec = ((st == AT_UPPER) | (st == AT_ZERO)) & movable & (d > self.dtol)
            cand = inc | dec
            if not cand.any():
                return "infeasible" if phase1 else "optimal"
            if bland:
                q = int(np.argmax(cand))
            else:
                score = np.where(cand, np.abs(d), 0.0)
                q = int(np.argmax(score))
            direction = 1.0 if inc[q] else -1.0
            alpha = self.factor.ftran(self._column(q))
            delta = -direction * alpha  # change of x_B per unit step
            if phase1:
                lim_dec = np.where(below, -np.inf, np.where(above, upB, loB))
                lim_inc = np.where(above, np.inf, np.where(below, loB, upB))
            else:
                lim_dec, lim_inc = loB, upB
            r, theta, to_bound = self._ratio(xB, delta, lim_dec, lim_inc, bland)
            flip = self.up[q] - self.lo[q]
            if np.isfinite(flip) and (r < 0 or flip <= theta):
                self.x[q] = self.up[q] if direction > 0 else self.lo[q]
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[head] += delta * flip
                self.iters += 1
                degenerate = 0
                bland = False
                continue
            if r < 0:
                if phase1:
                    return "infeasible"  # numerical trouble; should not happen
                return "unbounded"
            p = head[r]
            self.x[head] += delta * theta
            self.x[q] += direction * theta
            self.x[p] = to_bound
            self.status[p] = AT_LOWER if to_bound == self.lo[p] else AT_UPPER
            self.status[q] = BASIC
            self.head[r] = q
            self.factor.update(r, alpha)
            self.iters += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > self.degenerate_limit:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def _ratio(self, xB, delta, lim_dec, lim_inc, bland):
        """Harris two-pass ratio test; returns (row, step, bound value) or (-1, inf, nan)."""
        ptol = self.ptol
        dec = delta < -ptol
        inc = delta > ptol
        with np.errstate(invalid="ignore", divide="ignore"):
            num = np.where(dec, xB - lim_dec, np.where(inc, lim_inc - xB, np.inf))
            den = np.abs(delta)
            ok = (dec | inc) & np.isfinite(num)
            if not ok.any():
                return -1, np.inf, np.nan
            idx = np.nonzero(ok)[0]
            num = num[idx]
            den = den[idx]
            exact = np.maximum(num, 0.0) / den
            if bland:
                tmin = exact.min()
                ties = idx[exact <= tmin + 1e-12]
                k = ties[np.argmin(self.head[ties])]
                theta = float(exact[np.searchsorted(idx, k)])
            else:
                relaxed = (num + self.ftol) / den
                tmax = relaxed.min()
                pool = exact <= tmax
                sel = np.argmax(np.where(pool, den, -1.0))
                k = idx[sel]
                theta = float(exact[sel])
        bound = lim_dec[k] if delta[k] < 0 else lim_inc[k]
        return int(k), theta, float(bound)

    # ---- dual simplex ----------------------------------------------
    def _dual(self, t0, max_iter: int) -> str:
        """Dual simplex with dual Devex row pricing; reduced costs are updated from the pivot row."""
        movable = self.up > self.lo
        start = self.iters
        w = np.ones(self.m)
        d = self._reduced_costs(self.cost[self.head], self.cost)
        while True:
            if self._check_limits(t0):
                return "limit"
            if self.iters - start > max_iter:
                return "stalled"
            if len(self.factor.etas) >= self.refactor_every:
                self._refactor()
                d = self._reduced_costs(self.cost[self.head], self.cost)
            head = self.head
            xB = self.x[head]
            loB, upB = self.lo[head], self.up[head]
            infeas = np.maximum(loB - xB, xB - upB)
            if infeas.max() <= self.ftol:
                return "optimal"
            r = int(np.argmax(np.where(infeas > self.ftol, infeas * infeas / w, -1.0)))
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self.factor.btran(e)
            arow = self.AT @ rho
            arow[head] = 0.0
            st = self.status
            at_lo = (st == AT_LOWER) | (st == AT_ZERO)
            at_up = (st == AT_UPPER) | (st == AT_ZERO)
            if xB[r] < loB[r]:
                target = loB[r]
                elig = movable & ((at_lo & (arow < -self.ptol)) | (at_up & (arow > self.ptol)))
            else:
                target = upB[r]
                elig = movable & ((at_lo & (arow > self.ptol)) | (at_up & (arow < -self.ptol)))
            if not elig.any():
                return "infeasible"
            idx = np.nonzero(elig)[0]
            a = np.abs(arow[idx])
            dj = np.abs(d[idx])
            relaxed = (dj + self.dtol) / a
            tmax = relaxed.min()
            pool = dj / a <= tmax
            sel = np.argmax(np.where(pool, a, -1.0))
            q = int(idx[sel])
            alpha = self.factor.ftran(self._column(q))
            if abs(alpha[r]) < self.ptol or abs(alpha[r] - arow[q]) > 1e-6 * (1.0 + abs(arow[q])):
                # pivot element disagrees between row and column: refresh the factor
                if not self.factor.etas:
                    return "stalled"
                self._refactor()
                d = self._reduced_costs(self.cost[self.head], self.cost)
                continue
            theta = (xB[r] - target) / alpha[r]
            theta_d = d[q] / arow[q]
            p = head[r]
            d -= theta_d * arow
            d[q] = 0.0
            d[p] = -theta_d
            wr = max(w[r] / (alpha[r] * alpha[r]), 1.0)
            ratio = alpha / alpha[r]
            w = np.maximum(w, ratio * ratio * w[r])
            w[r] = wr
            self.x[head] -= alpha * theta
            self.x[q] += theta
            self.x[p] = target
            self.status[p] = AT_LOWER if target == self.lo[p] else AT_UPPER
            self.status[q] = BASIC
            self.head[r] = q
            self.factor.update(r, alpha)
            self.iters += 1

    def _dual_feasible(self) -> bool:
        d = self._reduced_costs(self.cost[self.head], self.cost)
        st = self.status
        movable = self.up > self.lo
        bad_lo = ((st == AT_LOWER) | (st == AT_ZERO)) & movable & (d < -self.dtol)
        bad_up = ((st == AT_UPPER) | (st == AT_ZERO)) & movable & (d > self.dtol)
        return not (bad_lo.any() or bad_up.any())

    # ---- driver -------------------------------------------------------
    def solve(self, lb=None, ub=None, basis: Optional[Basis] = None) -> LPResult:
        t0 = time.perf_counter()
        self.iters = 0
        self._set_bounds(lb, ub)
        n, m = self.n, self.m
        if np.any(self.lo > self.up + self.ftol):
            return LPResult("infeasible", None, np.nan, None, None, None, 0, None)
        if m == 0:
            return self._solve_no_rows()
        status = None
        if basis is not None:
            self._install(basis)
            self._refactor()
            if self._dual_feasible():
                status = self._dual(t0, max_iter=max(200, 2 * m))
                if status in ("optimal", "stalled"):
                    status = None  # polish with primal
        else:
            status = self._cold_dual(t0)
        if status is None:
            status = self._primal(t0)
            if status == "optimal":
                # a final refactor guards against drift in the eta file
                self._refactor()
                status = self._primal(t0)
        self.total_iterations += self.iters
        basis_out = Basis(self.head.copy(), self.status.copy())
        if status != "optimal":
            x = self.x[:n] * self.C if status == "limit" else None
            return LPResult(status, x, np.nan, None, None, None, self.iters, basis_out)
        y_s = self.factor.btran(self.cost[self.head])
        d_s = self.cost - self.AT @ y_s
        d_s[self.head] = 0.0
        x = self.x[:n] * self.C
        duals = y_s * self.R / self.sigma
        red = d_s[:n] / (self.C * self.sigma)
        act = self.x[n:] / self.R
        obj = float(self.c_orig @ x)
        return LPResult("optimal", x, obj, duals, red, act, self.iters, basis_out)

    def _cold_dual(self, t0) -> Optional[str]:
        """Start from the slack basis and run dual simplex when costs allow.

        Columns with negative cost sit at their upper bound; when that bound
        is infinite a temporary box is imposed and primal simplex finishes
        the job after it is lifted.  Returns None when primal should run.
        """
        self._slack_basis()
        n = self.n
        neg = self.cost[:n] < 0
        boxed = neg & ~np.isfinite(self.up[:n])
        saved = self.up.copy()
        if boxed.any():
            finite = np.abs(np.concatenate([self.lo[np.isfinite(self.lo)], self.up[np.isfinite(self.up)]]))
            big = 1e3 * max(1.0, finite.max() if finite.size else 1.0)
            self.up[:n][boxed] = big
        flip = neg & np.isfinite(self.up[:n])
        self.status[:n][flip] = AT_UPPER
        self.x[:n][flip] = self.up[:n][flip]
        self._refactor()
        status = None
        if self._dual_feasible():
            status = self._dual(t0, max_iter=self.max_iter)
            if status in ("optimal", "stalled") or (status == "infeasible" and boxed.any()):
                status = None
        if boxed.any():
            self.up = saved
            stuck = boxed & (self.status[:n] == AT_UPPER)
            if stuck.any():
                # the temporary box is gone: send those columns back to their lower bound
                self.status[:n][stuck] = AT_LOWER
                self.x[:n][stuck] = self.lo[:n][stuck]
                self._recompute_xb()
                return None
        return status

    def _solve_no_rows(self) -> LPResult:
        c = self.c_orig
        lo, up = self.lo[: self.n] * self.C, self.up[: self.n] * self.C
        x = np.where(c > 0, lo, np.where(c < 0, up, np.where(np.isfinite(lo), lo, np.where(np.isfinite(up), up, 0.0))))
        if not np.all(np.isfinite(x)):
            return LPResult("unbounded", None, np.nan, None, None, None, 0, None)
        return LPResult("optimal", x, float(c @ x), np.zeros(0), c.copy(), np.zeros(0), 0, None)
