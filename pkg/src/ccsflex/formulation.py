"""Sparse MILP assembly for expansion and fixed-capacity dispatch runs.

Column and row names follow ``kind[resource,hour]`` with 1-based hours, and
assembly order is fixed (resource order, then hour), so equal inputs always
give identical problems.  Hour ``t-1`` at ``t=1`` wraps to ``T``.

Unit-committed resources use clustered integer commitment: ``commit``,
``start`` and ``shut`` count units.  Ramp limits apply to units online in
both hours; a unit may reach any output up to its size in the hour it
starts, and may shut down from any output.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .domain import (
    FinanceParams,
    FlexParams,
    PolicyEnv,
    SystemSpec,
    annualize_capex,
    capture_intensity,
    effective_marginal_cost,
    startup_cost_per_mw,
    validate_policy,
    validate_system,
)

SENSES = ("<=", ">=", "=")
INF = math.inf


class FormulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """Minimisation MILP in row/column form with coordinate-format coefficients."""

    col_names: tuple
    col_lower: np.ndarray
    col_upper: np.ndarray
    col_integer: np.ndarray
    objective: np.ndarray
    row_names: tuple
    row_sense: tuple
    rhs: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    obj_offset: float = 0.0
    index: Optional["VariableIndex"] = None

    @property
    def n_cols(self) -> int:
        return len(self.col_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    @cached_property
    def col_pos(self) -> dict:
        return {n: j for j, n in enumerate(self.col_names)}

    @cached_property
    def row_pos(self) -> dict:
        return {n: i for i, n in enumerate(self.row_names)}

    @cached_property
    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.n_rows, -INF)
        up = np.full(self.n_rows, INF)
        sense = np.array(self.row_sense, dtype=object)
        le = sense == "<="
        ge = sense == ">="
        eq = sense == "="
        up[le | eq] = self.rhs[le | eq]
        lo[ge | eq] = self.rhs[ge | eq]
        return lo, up

    @property
    def has_integers(self) -> bool:
        return bool(np.any(self.col_integer))

    def relax(self) -> "Problem":
        return replace(self, col_integer=np.zeros(self.n_cols, dtype=bool))

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "Problem":
        return replace(self, col_lower=np.asarray(lower, float), col_upper=np.asarray(upper, float))

    def activity(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(x, float)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ np.asarray(x, float)) + self.obj_offset

    def value(self, x: np.ndarray, name: str) -> float:
        return float(x[self.col_pos[name]])

    def to_bytes(self) -> bytes:
        """Canonical serialisation used for equality and fingerprints."""
        h = []
        h.append("\x1f".join(self.col_names).encode())
        h.append("\x1f".join(self.row_names).encode())
        h.append("\x1f".join(self.row_sense).encode())
        for arr in (self.col_lower, self.col_upper, self.objective, self.rhs, self.vals):
            h.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.append(np.ascontiguousarray(self.col_integer, dtype="u1").tobytes())
        h.append(np.ascontiguousarray(self.rows, dtype="<i8").tobytes())
        h.append(np.ascontiguousarray(self.cols, dtype="<i8").tobytes())
        h.append(np.float64(self.obj_offset).tobytes())
        return b"\x1e".join(h)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    __hash__ = None


def row_violations(problem: Problem, x: np.ndarray, tol: float = 1e-6) -> list[tuple[str, float]]:
    """Independent feasibility check: (name, amount) for every violated row or bound.

    Row tolerances are relative to ``max(1, |rhs|)``.
    """
    x = np.asarray(x, float)
    out = []
    act = problem.activity(x)
    lo, up = problem.row_bounds
    scale = np.maximum(1.0, np.abs(problem.rhs))
    below = (lo - act) / scale
    above = (act - up) / scale
    for i in np.nonzero((below > tol) | (above > tol))[0]:
        out.append((problem.row_names[i], float(max(below[i], above[i]))))
    cscale = np.maximum(1.0, np.abs(x))
    for j in np.nonzero(((problem.col_lower - x) / cscale > tol) | ((x - problem.col_upper) / cscale > tol))[0]:
        out.append((f"bound:{problem.col_names[j]}", float(max(problem.col_lower[j] - x[j], x[j] - problem.col_upper[j]))))
    for j in np.nonzero(problem.col_integer)[0]:
        if abs(x[j] - round(x[j])) > 1e-5:
            out.append((f"integrality:{problem.col_names[j]}", float(abs(x[j] - round(x[j])))))
    return out


@dataclass
class VariableIndex:
    """Maps ``(kind, resource, hour)`` to a column id; hour/resource may be None.

    ``constants`` holds quantities that are data rather than columns in the
    current mode, such as ``("CAP", g)`` under fixed capacities.
    """

    ids: dict = field(default_factory=dict)
    kinds: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def add(self, kind: str, resource: Optional[str], hour: Optional[int], col: int):
        key = (kind, resource, hour)
        if key in self.ids:
            raise FormulationError(f"duplicate variable {key}")
        self.ids[key] = col
        self.kinds.setdefault(kind, []).append(col)

    def __getitem__(self, key) -> int:
        return self.ids[key]

    def get(self, kind, resource=None, hour=None, default=None):
        return self.ids.get((kind, resource, hour), default)

    def __contains__(self, key):
        return key in self.ids

    def extent(self, kind: str) -> int:
        return len(self.kinds.get(kind, ()))

    def series(self, kind: str, resource: Optional[str], T: int) -> np.ndarray:
        """Column ids for hours 1..T of a per-hour variable, -1 where absent."""
        return np.array([self.ids.get((kind, resource, t), -1) for t in range(1, T + 1)], dtype=int)

    def key_of(self, col: int):
        for k, v in self.ids.items():
            if v == col:
                return k
        raise KeyError(col)


def capacity(problem: Problem, x: np.ndarray, resource) -> float:
    """Installed power capacity (MW) of ``resource`` in the solution ``x``."""
    ix = problem.index
    j = ix.get("CAP", resource.name)
    if j is not None:
        return float(x[j])
    j = ix.get("units", resource.name)
    if j is not None:
        return float(round(x[j])) * resource.unit_size
    return float(ix.constants[("CAP", resource.name)])


def energy_capacity(problem: Problem, x: np.ndarray, name: str) -> float:
    ix = problem.index
    j = ix.get("CAPE", name)
    if j is not None:
        return float(x[j])
    return float(ix.constants[("CAPE", name)])


def col_name(kind: str, resource: Optional[str], hour: Optional[int]) -> str:
    inner = [x for x in (resource, hour) if x is not None]
    if not inner:
        return kind
    return f"{kind}[{','.join(str(x) for x in inner)}]"


class ProblemBuilder:
    def __init__(self):
        self.index = VariableIndex()
        self._cn, self._lo, self._up, self._int, self._obj = [], [], [], [], []
        self._rn, self._sense, self._rhs = [], [], []
        self._r, self._c, self._v = [], [], []
        self.offset = 0.0

    def var(self, kind, resource=None, hour=None, lo=0.0, up=INF, integer=False, cost=0.0) -> int:
        j = len(self._cn)
        self._cn.append(col_name(kind, resource, hour))
        self._lo.append(float(lo))
        self._up.append(float(up))
        self._int.append(bool(integer))
        self._obj.append(float(cost))
        self.index.add(kind, resource, hour, j)
        return j

    def add_cost(self, col: int, cost: float):
        self._obj[col] += float(cost)

    def row(self, name: str, terms, sense: str, rhs: float) -> int:
        if sense not in SENSES:
            raise FormulationError(f"bad sense {sense!r}")
        i = len(self._rn)
        self._rn.append(name)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        for col, val in terms:
            self._r.append(i)
            self._c.append(col)
            self._v.append(float(val))
        return i

    def build(self) -> Problem:
        n, m = len(self._cn), len(self._rn)
        if len(set(self._cn)) != n:
            raise FormulationError("duplicate column names")
        if len(set(self._rn)) != m:
            raise FormulationError("duplicate row names")
        lo = np.array(self._lo, float)
        up = np.array(self._up, float)
        integer = np.array(self._int, bool)
        if np.any(integer & ~(np.isfinite(lo) & np.isfinite(up))):
            bad = [self._cn[j] for j in np.nonzero(integer & ~(np.isfinite(lo) & np.isfinite(up)))[0]]
            raise FormulationError(f"integer columns need finite bounds: {bad[:5]}")
        r = np.array(self._r, dtype=np.int64)
        c = np.array(self._c, dtype=np.int64)
        v = np.array(self._v, float)
        # merge duplicate (row, col) entries and drop exact zeros
        if len(r):
            key = r * max(n, 1) + c
            order = np.argsort(key, kind="stable")
            key, v = key[order], v[order]
            uniq, start = np.unique(key, return_index=True)
            v = np.add.reduceat(v, start)
            r, c = uniq // max(n, 1), uniq % max(n, 1)
            keep = v != 0.0
            r, c, v = r[keep], c[keep], v[keep]
        return Problem(
            col_names=tuple(self._cn),
            col_lower=lo,
            col_upper=up,
            col_integer=integer,
            objective=np.array(self._obj, float),
            row_names=tuple(self._rn),
            row_sense=tuple(self._sense),
            rhs=np.array(self._rhs, float),
            rows=r,
            cols=c,
            vals=v,
            obj_offset=float(self.offset),
            index=self.index,
        )


@dataclass(frozen=True)
class BuildMode:
    """``expansion`` or ``dispatch-fixed``; the latter needs every capacity.

    ``fixed_energy`` gives storage energy capacity (MWh); when omitted the
    resource's existing energy capacity is used.
    """

    kind: str = "expansion"
    fixed_caps: Mapping[str, float] = field(default_factory=dict)
    fixed_energy: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def expansion(cls) -> "BuildMode":
        return cls("expansion")

    @classmethod
    def dispatch(cls, caps: Mapping[str, float], energy: Optional[Mapping[str, float]] = None) -> "BuildMode":
        return cls("dispatch-fixed", dict(caps), dict(energy or {}))

    @property
    def is_expansion(self) -> bool:
        return self.kind == "expansion"


def uc_windows(duration: int, T: int) -> list[tuple[int, tuple[int, ...]]]:
    """Circular trailing windows ``{t-d+1, ..., t}`` for every anchor hour."""
    if int(duration) != duration or duration < 1:
        raise ValueError(f"duration must be an integer >= 1, got {duration}")
    if duration > T:
        raise ValueError(f"duration {duration} exceeds horizon {T}")
    d = int(duration)
    return [(t, tuple(((t - k - 1) % T) + 1 for k in range(d - 1, -1, -1))) for t in range(1, T + 1)]


def uc_window_rows(min_up: int, min_down: int, T: int):
    """Window membership for minimum up- and down-time rows: ``(up, down)``."""
    return uc_windows(min_up, T), uc_windows(min_down, T)


def _prev(t: int, T: int) -> int:
    return T if t == 1 else t - 1


def _max_units(r, spec: SystemSpec) -> int:
    if r.max_cap is not None:
        return int(math.floor(r.max_cap / r.unit_size + 1e-9))
    if not r.can_expand:
        return int(math.floor(r.existing_cap / r.unit_size + 1e-9))
    peak = float(spec.demand.max()) if len(spec.demand) else 0.0
    return int(math.floor(r.existing_cap / r.unit_size + 1e-9)) + int(math.ceil(peak / r.unit_size))


def _cap_bounds(r, spec: SystemSpec, pol: PolicyEnv) -> tuple[float, float]:
    no_retire = (not r.can_retire) or (pol.nuclear_no_retire and r.tech == "nuclear")
    lo = r.existing_cap if no_retire else 0.0
    if r.can_expand:
        up = r.max_cap if r.max_cap is not None else INF
    else:
        up = r.existing_cap
    return lo, up


def build_model(
    spec: SystemSpec,
    pol: PolicyEnv,
    fin: Optional[FinanceParams] = None,
    mode: Optional[BuildMode] = None,
) -> Problem:
    """Assemble the planning MILP for ``spec`` under ``pol``."""
    fin = fin or FinanceParams()
    mode = mode or BuildMode.expansion()
    report = validate_system(spec)
    problems = list(report.violations) + validate_policy(pol)
    if problems:
        raise FormulationError("invalid inputs: " + "; ".join(str(v) for v in problems))
    if mode.kind not in ("expansion", "dispatch-fixed"):
        raise FormulationError(f"unknown build mode {mode.kind!r}")
    if not mode.is_expansion:
        missing = [r.name for r in spec.resources if r.name not in mode.fixed_caps]
        if missing:
            raise FormulationError(f"dispatch-fixed mode lacks capacities for {missing}")
    T = spec.horizon_hours
    for r in spec.resources:
        if r.is_uc and max(r.flex.min_up, r.flex.min_down) > T:
            raise FormulationError(f"{r.name}: horizon {T} h shorter than min up/down time")

    b = ProblemBuilder()
    w = spec.hour_weight
    hours = range(1, T + 1)
    gen_cols: dict[int, list] = {t: [] for t in hours}
    ces_terms: list = []

    for r in spec.resources:
        g = r.name
        life = fin.lifetime(r)
        ann_p = 1000.0 * annualize_capex(r.capex_power, fin.wacc, life, r.itc_fraction)
        fom_p = 1000.0 * r.fom_power
        mc = effective_marginal_cost(r, pol)

        # capacity: a column in expansion mode, a constant otherwise
        cap_col = None
        cap_fixed = None
        if mode.is_expansion:
            lo, up = _cap_bounds(r, spec, pol)
            if r.is_uc:
                U = r.unit_size
                nmax = _max_units(r, spec)
                ulo = math.ceil(lo / U - 1e-9)
                cap_col = b.var("units", g, None, lo=min(ulo, nmax), up=nmax, integer=True,
                                cost=U * (fom_p + (ann_p if r.existing_cap == 0 else 0.0)))
                scale = U
            else:
                cap_col = b.var("CAP", g, None, lo=lo, up=up,
                                cost=fom_p + (ann_p if r.existing_cap == 0 else 0.0))
                scale = 1.0
            if r.can_expand and r.existing_cap > 0:
                nc = b.var("newcap", g, None, lo=0.0, up=INF, cost=ann_p)
                b.row(f"newcap[{g}]", [(nc, 1.0), (cap_col, -scale)], ">=", -r.existing_cap)
        else:
            cap_fixed = float(mode.fixed_caps[g])
            if not (math.isfinite(cap_fixed) and cap_fixed >= 0):
                raise FormulationError(f"{g}: fixed capacity must be finite and >= 0, got {cap_fixed}")
            b.index.constants[("CAP", g)] = cap_fixed
            built = max(cap_fixed - r.existing_cap, 0.0)
            b.offset += fom_p * cap_fixed + ann_p * built

        if r.is_storage:
            ann_e = 1000.0 * annualize_capex(r.capex_energy, fin.wacc, life, r.itc_fraction)
            fom_e = 1000.0 * r.fom_energy
            capE_col = None
            if mode.is_expansion:
                elo = r.existing_energy if not r.can_retire else 0.0
                eup = INF if r.can_expand else r.existing_energy
                capE_col = b.var("CAPE", g, None, lo=elo, up=eup,
                                 cost=fom_e + (ann_e if r.existing_energy == 0 else 0.0))
                if r.can_expand and r.existing_energy > 0:
                    nce = b.var("newcapE", g, None, lo=0.0, up=INF, cost=ann_e)
                    b.row(f"newcapE[{g}]", [(nce, 1.0), (capE_col, -1.0)], ">=", -r.existing_energy)
                if r.storage_duration_max is not None:
                    b.row(f"duration[{g}]", [(capE_col, 1.0), (cap_col, -r.storage_duration_max)], "<=", 0.0)
            else:
                capE = float(mode.fixed_energy.get(g, r.existing_energy))
                if not (math.isfinite(capE) and capE >= 0):
                    raise FormulationError(f"{g}: fixed energy capacity must be finite and >= 0")
                b.index.constants[("CAPE", g)] = capE
                b.offset += fom_e * capE + ann_e * max(capE - r.existing_energy, 0.0)
            for t in hours:
                pup = INF if cap_col is not None else cap_fixed
                eup_t = INF if capE_col is not None else capE
                ch = b.var("charge", g, t, up=pup)
                dis = b.var("discharge", g, t, up=pup, cost=w * r.vom)
                b.var("soc", g, t, up=eup_t)
                gen_cols[t].append((dis, 1.0))
                gen_cols[t].append((ch, -1.0))
            for t in hours:
                ch, dis, soc = (b.index[(k, g, t)] for k in ("charge", "discharge", "soc"))
                socp = b.index[("soc", g, _prev(t, T))]
                b.row(f"soc[{g},{t}]", [(soc, 1.0), (socp, -1.0), (ch, -r.eff_charge), (dis, 1.0 / r.eff_discharge)], "=", 0.0)
                if cap_col is not None:
                    b.row(f"charge_max[{g},{t}]", [(ch, 1.0), (cap_col, -1.0)], "<=", 0.0)
                    b.row(f"discharge_max[{g},{t}]", [(dis, 1.0), (cap_col, -1.0)], "<=", 0.0)
                if capE_col is not None:
                    b.row(f"soc_max[{g},{t}]", [(soc, 1.0), (capE_col, -1.0)], "<=", 0.0)
            continue

        if r.is_uc:
            _add_uc(b, spec, pol, r, cap_col, cap_fixed, mc, gen_cols, ces_terms)
            continue

        for t in hours:
            if r.is_vre:
                avail = float(spec.vre_profiles[g][t - 1])
                up = INF if cap_col is not None else avail * cap_fixed
                p = b.var("vP", g, t, up=up, cost=w * mc)
                if cap_col is not None:
                    b.row(f"vre_cap[{g},{t}]", [(p, 1.0), (cap_col, -avail)], "<=", 0.0)
            else:
                up = INF if cap_col is not None else cap_fixed
                p = b.var("vP", g, t, up=up, cost=w * mc)
                if cap_col is not None:
                    b.row(f"cap_max[{g},{t}]", [(p, 1.0), (cap_col, -1.0)], "<=", 0.0)
            gen_cols[t].append((p, 1.0))
            ces_terms.append((p, r.ces_qualifying))

    for t in hours:
        nse = b.var("nse", None, t, cost=w * spec.nse_penalty)
        b.row(f"balance[{t}]", gen_cols[t] + [(nse, 1.0)], "=", float(spec.demand[t - 1]))

    if pol.ces_fraction > 0:
        f = pol.ces_fraction
        if pol.ces_basis == "demand":
            terms = [(c, 1.0) for c, q in ces_terms if q]
            b.row("ces", terms, ">=", f * float(spec.demand.sum()))
        else:
            terms = [(c, (1.0 - f) if q else -f) for c, q in ces_terms]
            b.row("ces", terms, ">=", 0.0)
    return b.build()


def _add_uc(b: ProblemBuilder, spec, pol, r, cap_col, cap_fixed, mc, gen_cols, ces_terms):
    g = r.name
    T = spec.horizon_hours
    w = spec.hour_weight
    flex: FlexParams = r.flex
    U = r.unit_size
    hours = range(1, T + 1)
    if cap_col is not None:
        nmax = b._up[cap_col]
        n_fixed = None
    else:
        n_fixed = math.floor(cap_fixed / U + 1e-9)
        nmax = n_fixed
    su = startup_cost_per_mw(r, pol, flex).total
    for t in hours:
        p = b.var("vP", g, t, up=INF, cost=w * mc)
        b.var("commit", g, t, up=nmax, integer=True)
        b.var("start", g, t, up=nmax, integer=True, cost=w * U * su)
        b.var("shut", g, t, up=nmax, integer=True)
        gen_cols[t].append((p, 1.0))
        ces_terms.append((p, r.ces_qualifying))
    ix = b.index
    P = {t: ix[("vP", g, t)] for t in hours}
    C = {t: ix[("commit", g, t)] for t in hours}
    S = {t: ix[("start", g, t)] for t in hours}
    D = {t: ix[("shut", g, t)] for t in hours}
    for t in hours:
        b.row(f"uc_max[{g},{t}]", [(P[t], 1.0), (C[t], -U)], "<=", 0.0)
        b.row(f"uc_min[{g},{t}]", [(P[t], 1.0), (C[t], -flex.min_load * U)], ">=", 0.0)
        if cap_col is not None:
            b.row(f"uc_units[{g},{t}]", [(C[t], 1.0), (cap_col, -1.0)], "<=", 0.0)
        tp = _prev(t, T)
        b.row(f"uc_logic[{g},{t}]", [(C[t], 1.0), (C[tp], -1.0), (S[t], -1.0), (D[t], 1.0)], "=", 0.0)
    up_w, down_w = uc_window_rows(flex.min_up, flex.min_down, T)
    for t, members in up_w:
        b.row(f"min_up[{g},{t}]", [(S[k], 1.0) for k in members] + [(C[t], -1.0)], "<=", 0.0)
    for t, members in down_w:
        terms = [(D[k], 1.0) for k in members] + [(C[t], 1.0)]
        if cap_col is not None:
            b.row(f"min_down[{g},{t}]", terms + [(cap_col, -1.0)], "<=", 0.0)
        else:
            b.row(f"min_down[{g},{t}]", terms, "<=", float(n_fixed))
    ru = flex.ramp_rate * U
    for t in hours:
        tp = _prev(t, T)
        # continuing units move at most ru; started units may reach U
        b.row(f"ramp_up[{g},{t}]", [(P[t], 1.0), (P[tp], -1.0), (C[t], -ru), (S[t], ru - U)], "<=", 0.0)
        b.row(f"ramp_down[{g},{t}]", [(P[tp], 1.0), (P[t], -1.0), (C[t], -ru), (S[t], ru), (D[t], -U)], "<=", 0.0)


def fix_plant_flex(
    spec: SystemSpec,
    pol: PolicyEnv,
    fin: Optional[FinanceParams],
    mode: Optional[BuildMode],
    resource: str,
    flex: FlexParams,
) -> Problem:
    """Rebuild the problem with ``resource`` carrying ``flex``; nothing else changes."""
    r = spec.resource(resource)
    if not r.is_uc:
        raise FormulationError(f"{resource} is not a unit-committed resource")
    return build_model(spec.with_resource(replace(r, flex=flex)), pol, fin, mode)


def capture_per_mwh(spec: SystemSpec) -> dict:
    return {r.name: capture_intensity(r) for r in spec.resources}
