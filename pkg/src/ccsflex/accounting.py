"""Reported quantities computed from primal (and dual) solution values.

Nothing here trusts the solver's own bookkeeping: costs are rebuilt from
the resource data and the column values, so :func:`total_system_cost`
doubles as a check on objective assembly.

Money is annualised with ``spec.hour_weight``; energy, tonnes and start
counts are totals over the modelled horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import (
    FinanceParams,
    FlexParams,
    PolicyEnv,
    ResourceSpec,
    SystemSpec,
    annualize_capex,
    capture_intensity,
    emitted_intensity,
    startup_cost_per_mw,
)
from .formulation import Problem, capacity, energy_capacity
from .solver import Solution


class AccountingError(ValueError):
    pass


def _require_optimal(sol: Solution):
    if sol.status != "optimal" or sol.x is None:
        raise AccountingError(f"need an optimal solution, got {sol.status}")


def _series(problem: Problem, x: np.ndarray, kind: str, name: Optional[str], T: int) -> np.ndarray:
    cols = problem.index.series(kind, name, T)
    out = np.zeros(T)
    have = cols >= 0
    out[have] = x[cols[have]]
    return out


def spells(on: Sequence[bool]) -> tuple[list[int], list[int]]:
    """Lengths of on- and off-spells of a circular on/off series."""
    on = np.asarray(on, bool)
    T = len(on)
    if T == 0:
        return [], []
    if on.all():
        return [T], []
    if not on.any():
        return [], [T]
    # rotate so the series starts right after an on->off or off->on change
    k = int(np.nonzero(on != np.roll(on, 1))[0][0])
    r = np.roll(on, -k)
    ons, offs = [], []
    run, state = 0, r[0]
    for v in r:
        if v == state:
            run += 1
        else:
            (ons if state else offs).append(run)
            run, state = 1, v
    (ons if state else offs).append(run)
    return ons, offs


def histogram(lengths: Iterable[int]) -> list[tuple[int, int]]:
    vals, counts = np.unique(np.asarray(list(lengths), int), return_counts=True)
    return [(int(v), int(c)) for v, c in zip(vals, counts)]


@dataclass(frozen=True)
class ResourceMetrics:
    capacity: float  # MW
    capacity_factor: float
    generation: float  # MWh
    startups: int
    captured_t: float
    emitted_t: float
    curtailed: float  # MWh, vre only
    up_spells: tuple = ()  # (hours, occurrences)
    down_spells: tuple = ()


@dataclass(frozen=True)
class Metrics:
    resources: dict
    nse: float  # MWh
    total_system_cost: float  # $/yr
    horizon_hours: int

    def __getitem__(self, name: str) -> ResourceMetrics:
        return self.resources[name]


def compute_metrics(spec: SystemSpec, problem: Problem, sol: Solution, pol: Optional[PolicyEnv] = None,
                    fin: Optional[FinanceParams] = None) -> Metrics:
    _require_optimal(sol)
    pol = pol or PolicyEnv()
    T = spec.horizon_hours
    x = sol.x
    out = {}
    for r in spec.resources:
        cap = capacity(problem, x, r)
        if r.is_storage:
            gen = _series(problem, x, "discharge", r.name, T)
        else:
            gen = _series(problem, x, "vP", r.name, T)
        total = float(gen.sum())
        cf = total / (cap * T) if cap > 1e-9 else 0.0
        starts = 0
        up = down = ()
        captured = total * capture_intensity(r)
        emitted = total * emitted_intensity(r)
        curtailed = 0.0
        if r.is_uc:
            commit = np.round(_series(problem, x, "commit", r.name, T))
            start = np.round(_series(problem, x, "start", r.name, T))
            starts = int(start.sum())
            su = startup_cost_per_mw(r, pol)
            captured += starts * r.unit_size * su.captured_t
            emitted += starts * r.unit_size * su.emitted_t
            ons, offs = spells(commit > 0)
            up, down = tuple(histogram(ons)), tuple(histogram(offs))
        if r.is_vre:
            avail = spec.vre_profiles[r.name] * cap
            curtailed = float(np.clip(avail - gen, 0.0, None).sum())
        out[r.name] = ResourceMetrics(cap, min(max(cf, 0.0), 1.0), total, starts, captured, emitted,
                                      curtailed, up, down)
    nse = float(_series(problem, x, "nse", None, T).sum())
    tsc = total_system_cost(spec, pol, fin or FinanceParams(), problem, sol).total
    return Metrics(out, nse, tsc, T)


def hourly_prices(spec: SystemSpec, problem: Problem, priced: Solution) -> np.ndarray:
    """Balance-row duals in $/MWh (undoing the hour weight)."""
    if priced.duals is None:
        raise AccountingError("solution carries no duals; price it with fix_and_price first")
    rows = [problem.row_pos[f"balance[{t}]"] for t in range(1, spec.horizon_hours + 1)]
    return priced.duals[rows] / spec.hour_weight


@dataclass(frozen=True)
class ProfitStatement:
    energy_revenue: float
    credit_revenue: float
    ptc_revenue: float
    fuel_cost: float
    vom_cost: float
    carbon_tax_cost: float
    transport_storage_cost: float
    startup_cost: float  # fixed start charge plus start fuel
    fixed_om: float  # reported for comparison, not part of the profit

    @property
    def revenue(self) -> float:
        return self.energy_revenue + self.credit_revenue + self.ptc_revenue

    @property
    def cost(self) -> float:
        return (self.fuel_cost + self.vom_cost + self.carbon_tax_cost + self.transport_storage_cost
                + self.startup_cost)

    @property
    def operating_profit(self) -> float:
        return self.revenue - self.cost


def operating_profit(spec: SystemSpec, pol: PolicyEnv, problem: Problem, sol: Solution,
                     prices: Sequence[float], resource: str, flex: Optional[FlexParams] = None) -> ProfitStatement:
    """Annual operating profit of one resource at the given hourly prices."""
    _require_optimal(sol)
    T = spec.horizon_hours
    prices = np.asarray(prices, float)
    if prices.shape != (T,):
        raise AccountingError(f"expected {T} prices, got {prices.shape}")
    r = spec.resource(resource)
    w = spec.hour_weight
    x = sol.x
    gen = _series(problem, x, "vP", r.name, T)
    mwh = float(gen.sum())
    cap = capacity(problem, x, r)
    starts_mw = 0.0
    su = startup_cost_per_mw(r, pol, flex)
    if r.is_uc:
        starts_mw = float(np.round(_series(problem, x, "start", r.name, T)).sum()) * r.unit_size
    cap_t = mwh * capture_intensity(r) + starts_mw * su.captured_t
    emit_t = mwh * emitted_intensity(r) + starts_mw * su.emitted_t
    return ProfitStatement(
        energy_revenue=w * float(prices @ gen),
        credit_revenue=w * pol.capture_credit * cap_t,
        ptc_revenue=w * r.ptc * mwh,
        fuel_cost=w * r.fuel_price * r.heat_rate * mwh,
        vom_cost=w * r.vom * mwh,
        carbon_tax_cost=w * pol.carbon_tax * emit_t,
        transport_storage_cost=w * pol.co2_transport_storage_cost * cap_t,
        startup_cost=w * starts_mw * (su.fixed + su.fuel),
        fixed_om=1000.0 * r.fom_power * cap,
    )


@dataclass(frozen=True)
class SystemCost:
    fixed: float  # annualised capital plus fixed O&M, ITC applied
    fuel: float
    vom: float
    startup: float  # start charges plus start fuel
    transport_storage: float
    nse: float
    carbon_tax: float
    capture_credit: float
    ptc: float
    itc: float  # capital subsidy already netted out of ``fixed``

    @property
    def total(self) -> float:
        return (self.fixed + self.fuel + self.vom + self.startup + self.transport_storage + self.nse
                + self.carbon_tax - self.capture_credit - self.ptc)

    @property
    def without_transfers(self) -> float:
        """Resource cost with taxes and subsidies removed."""
        return self.total - self.carbon_tax + self.capture_credit + self.ptc + self.itc


def _fixed_cost(r: ResourceSpec, fin: FinanceParams, cap: float, existing: float, capex: float,
                fom: float) -> tuple[float, float]:
    life = fin.lifetime(r)
    built = max(cap - existing, 0.0)
    ann = 1000.0 * annualize_capex(capex, fin.wacc, life, r.itc_fraction)
    ann_gross = 1000.0 * annualize_capex(capex, fin.wacc, life, 0.0)
    return 1000.0 * fom * cap + ann * built, (ann_gross - ann) * built


def total_system_cost(spec: SystemSpec, pol: PolicyEnv, fin: FinanceParams, problem: Problem,
                      sol: Solution) -> SystemCost:
    """Recompute the planning objective term by term from primal values."""
    _require_optimal(sol)
    T = spec.horizon_hours
    w = spec.hour_weight
    x = sol.x
    acc = dict(fixed=0.0, fuel=0.0, vom=0.0, startup=0.0, transport_storage=0.0, nse=0.0,
               carbon_tax=0.0, capture_credit=0.0, ptc=0.0, itc=0.0)
    for r in spec.resources:
        cap = capacity(problem, x, r)
        f, itc = _fixed_cost(r, fin, cap, r.existing_cap, r.capex_power, r.fom_power)
        acc["fixed"] += f
        acc["itc"] += itc
        if r.is_storage:
            capE = energy_capacity(problem, x, r.name)
            f, itc = _fixed_cost(r, fin, capE, r.existing_energy, r.capex_energy, r.fom_energy)
            acc["fixed"] += f
            acc["itc"] += itc
            acc["vom"] += w * r.vom * float(_series(problem, x, "discharge", r.name, T).sum())
            continue
        mwh = float(_series(problem, x, "vP", r.name, T).sum())
        cap_t = mwh * capture_intensity(r)
        emit_t = mwh * emitted_intensity(r)
        if r.is_uc:
            su = startup_cost_per_mw(r, pol)
            mw = float(np.round(_series(problem, x, "start", r.name, T)).sum()) * r.unit_size
            acc["startup"] += w * mw * (su.fixed + su.fuel)
            cap_t += mw * su.captured_t
            emit_t += mw * su.emitted_t
        acc["fuel"] += w * r.fuel_price * r.heat_rate * mwh
        acc["vom"] += w * r.vom * mwh
        acc["ptc"] += w * r.ptc * mwh
        acc["carbon_tax"] += w * pol.carbon_tax * emit_t
        acc["capture_credit"] += w * pol.capture_credit * cap_t
        acc["transport_storage"] += w * pol.co2_transport_storage_cost * cap_t
    acc["nse"] = w * spec.nse_penalty * float(_series(problem, x, "nse", None, T).sum())
    return SystemCost(**acc)


def energy_residuals(spec: SystemSpec, problem: Problem, x: np.ndarray) -> np.ndarray:
    """Per-hour supply minus demand, built from the columns directly."""
    T = spec.horizon_hours
    net = _series(problem, x, "nse", None, T).copy()
    for r in spec.resources:
        if r.is_storage:
            net += _series(problem, x, "discharge", r.name, T) - _series(problem, x, "charge", r.name, T)
        else:
            net += _series(problem, x, "vP", r.name, T)
    return net - spec.demand


@dataclass(frozen=True)
class CaseResult:
    """One sweep cell reduced to the numbers the delta tables compare."""

    scenario: str
    combo: frozenset
    profit: float = math.nan
    capacity: float = math.nan
    tsc: float = math.nan


@dataclass(frozen=True)
class DeltaRow:
    scenario: str
    label: str
    combo: Optional[frozenset]
    profit: float
    capacity: float
    tsc: float
    synthetic: bool = False


SUM_OF_SINGLES = "add all individual impacts"
ALL_TOGETHER = "all together"


def combo_label(combo: Iterable[str]) -> str:
    items = sorted(combo)
    return "+".join(items) if items else "None"


def delta_table(baseline: CaseResult, cases: Sequence[CaseResult], all_params: Optional[frozenset] = None) -> list[DeltaRow]:
    """Deltas of each case against ``baseline``, plus the two summary rows.

    The summary rows appear when their inputs exist: the sum of every
    single-parameter delta, and the case with all parameters improved.
    """
    rows = []
    singles = []
    full = None
    for c in cases:
        if c.scenario != baseline.scenario:
            raise AccountingError(f"case {c.scenario!r} does not share baseline scenario {baseline.scenario!r}")
        row = DeltaRow(c.scenario, combo_label(c.combo), c.combo, c.profit - baseline.profit,
                       c.capacity - baseline.capacity, c.tsc - baseline.tsc)
        rows.append(row)
        if len(c.combo) == 1:
            singles.append(row)
        if all_params is not None and c.combo == all_params:
            full = row
    if singles:
        rows.append(DeltaRow(baseline.scenario, SUM_OF_SINGLES, None, sum(r.profit for r in singles),
                             sum(r.capacity for r in singles), sum(r.tsc for r in singles), True))
    if full is not None:
        rows.append(DeltaRow(baseline.scenario, ALL_TOGETHER, full.combo, full.profit, full.capacity, full.tsc, True))
    return rows
