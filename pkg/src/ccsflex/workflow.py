"""Three-stage study: expansion without the plant, fixed-fleet dispatch of
the plant under every flexibility combination, and expansion with the plant.

Cells of a sweep are independent.  They may run in worker processes, but
results are always merged in (policy, combination) plan order.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .accounting import (
    CaseResult,
    combo_label,
    Metrics,
    ProfitStatement,
    compute_metrics,
    delta_table,
    hourly_prices,
    operating_profit,
    total_system_cost,
)
from .domain import (
    FLEXIBLE,
    INFLEXIBLE,
    FinanceParams,
    FlexParams,
    PolicyEnv,
    SystemSpec,
    ccs_plant,
    effective_marginal_cost,
)
from .formulation import BuildMode, build_model, capacity, energy_capacity
from .solver import Solution, SolverOptions, fix_and_price, solve

PARAMS = ("P1", "P2", "P3", "P4", "P5")
_FIELD = {"P1": "startup_cost", "P2": "min_load", "P3": "ramp_rate", "P4": "min_down", "P5": "min_up"}


class WorkflowError(RuntimeError):
    def __init__(self, message: str, scenario: Optional[str] = None, combo: Optional[str] = None):
        where = "/".join(x for x in (scenario, combo) if x)
        super().__init__(f"[{where}] {message}" if where else message)
        self.scenario = scenario
        self.combo = combo


def parse_combo(text: str) -> frozenset:
    """``"P1+P2"`` -> ``{"P1", "P2"}``; ``"none"``/empty -> empty; ``"all"`` -> all five."""
    t = text.strip()
    if t.lower() in ("", "none", "0"):
        return frozenset()
    if t.lower() == "all":
        return frozenset(PARAMS)
    items = [p.strip().upper() for p in t.replace(",", "+").split("+")]
    return normalize_combo(items)


def normalize_combo(items: Iterable[str]) -> frozenset:
    out = frozenset(str(p).strip().upper() for p in items)
    bad = sorted(out - set(PARAMS))
    if bad:
        raise ValueError(f"unknown flexibility parameter(s) {bad}; expected a subset of {list(PARAMS)}")
    return out


def flex_combo(subset: Iterable[str], worst: FlexParams = INFLEXIBLE, best: FlexParams = FLEXIBLE) -> FlexParams:
    """Start from ``worst`` and take each named parameter from ``best``."""
    combo = parse_combo(subset) if isinstance(subset, str) else normalize_combo(subset)
    return replace(worst, **{_FIELD[p]: getattr(best, _FIELD[p]) for p in combo})


def all_combos() -> list[frozenset]:
    """All 32 subsets, ordered by size then name."""
    return [frozenset(c) for k in range(len(PARAMS) + 1) for c in itertools.combinations(PARAMS, k)]


def table_columns() -> list[frozenset]:
    """The 17 column headers of the delta tables: subsets of P1..P4 of size <= 4 plus the five singles."""
    cols = [frozenset()] + [frozenset([p]) for p in PARAMS]
    for k in (2, 3, 4):
        cols += [frozenset(c) for c in itertools.combinations(PARAMS[:4], k)]
    return cols


def table_cells() -> list[tuple[str, frozenset, Optional[frozenset]]]:
    """(row parameter, column combo, combo shown in the cell or None).

    Row ``Pi`` under column ``c`` shows the case ``c + {Pi}``; cells where
    ``Pi`` is not after every member of ``c`` are blank.
    """
    out = []
    for p in PARAMS:
        for c in table_columns():
            ok = all(PARAMS.index(q) < PARAMS.index(p) for q in c)
            out.append((p, c, (c | {p}) if ok else None))
    return out


def table_combos() -> list[frozenset]:
    """Every combination a full delta table needs, including the baseline."""
    need = {frozenset()} | {cell for _, _, cell in table_cells() if cell is not None}
    return [c for c in all_combos() if c in need]


def default_policies() -> list[PolicyEnv]:
    taxes = [PolicyEnv(carbon_tax=t, co2_transport_storage_cost=10.0, nuclear_no_retire=True) for t in (50.0, 100.0, 200.0)]
    ces = [PolicyEnv(ces_fraction=f, capture_credit=85.0, co2_transport_storage_cost=10.0, nuclear_no_retire=True)
           for f in (0.70, 0.80, 0.90)]
    return taxes + ces


@dataclass(frozen=True)
class StagePlan:
    stage: str  # "A", "B" or "C"
    policies: tuple
    combos: tuple = ()
    plant: str = "ccs"
    plant_capacity: float = 500.0  # MW, stage B
    joint_expansion: bool = True  # stage C re-optimises every capacity
    solver: SolverOptions = field(default_factory=SolverOptions)
    finance: FinanceParams = field(default_factory=FinanceParams)
    workers: int = 1
    worst: FlexParams = INFLEXIBLE
    best: FlexParams = FLEXIBLE

    def __post_init__(self):
        stage = self.stage.upper()
        if stage not in ("A", "B", "C"):
            raise ValueError(f"stage must be A, B or C, got {self.stage!r}")
        object.__setattr__(self, "stage", stage)
        object.__setattr__(self, "policies", tuple(self.policies))
        combos = tuple(normalize_combo(c) for c in (self.combos or (table_combos() if stage != "A" else ())))
        if len(set(combos)) != len(combos):
            raise ValueError("duplicate flexibility combinations in plan")
        if stage != "A" and frozenset() not in combos:
            combos = (frozenset(),) + combos
        object.__setattr__(self, "combos", combos)
        labels = [p.label() for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate policies in plan")


@dataclass(frozen=True)
class StageAResult:
    policy: PolicyEnv
    capacities: dict  # MW
    energy: dict  # MWh, storage
    objective: float
    solution: Solution = field(repr=False, compare=False)


@dataclass
class CellResult:
    policy: PolicyEnv
    combo: frozenset
    flex: FlexParams
    tsc: float
    tsc_without_transfers: float
    plant_capacity: float  # MW
    renewable_capacity: float  # MW
    capacities: dict
    metrics: Metrics
    profit: Optional[ProfitStatement] = None
    prices: Optional[np.ndarray] = None  # $/MWh
    plant_output: Optional[np.ndarray] = None  # MW
    plant_marginal_cost: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def scenario(self) -> str:
        return self.policy.label()

    @property
    def label(self) -> str:
        return combo_label(self.combo)


@dataclass
class SweepReport:
    stage: str
    cells: list
    provenance: dict
    plant: str = "ccs"

    def cell(self, scenario: str, combo) -> CellResult:
        combo = parse_combo(combo) if isinstance(combo, str) else frozenset(combo)
        for c in self.cells:
            if c.scenario == scenario and c.combo == combo:
                return c
        raise KeyError((scenario, combo_label(combo)))

    def scenarios(self) -> list[str]:
        seen = []
        for c in self.cells:
            if c.scenario not in seen:
                seen.append(c.scenario)
        return seen

    def case(self, c: CellResult) -> CaseResult:
        return CaseResult(c.scenario, c.combo, c.profit.operating_profit if c.profit else float("nan"),
                          c.plant_capacity, c.tsc)

    def deltas(self, scenario: str):
        cells = [c for c in self.cells if c.scenario == scenario]
        base = [c for c in cells if not c.combo]
        if not base:
            raise WorkflowError("sweep has no baseline cell", scenario)
        return delta_table(self.case(base[0]), [self.case(c) for c in cells if c.combo], frozenset(PARAMS))


def input_hash(spec: SystemSpec, *extra) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(spec.demand, "<f8").tobytes())
    for name in sorted(spec.vre_profiles):
        h.update(name.encode())
        h.update(np.ascontiguousarray(spec.vre_profiles[name], "<f8").tobytes())
    payload = {
        "T": spec.horizon_hours,
        "nse": spec.nse_penalty,
        "w": spec.hour_weight,
        "resources": [asdict(r) for r in spec.resources],
        "extra": [repr(e) for e in extra],
    }
    h.update(json.dumps(payload, sort_keys=True, default=repr).encode())
    return h.hexdigest()


def _provenance(spec: SystemSpec, plan: StagePlan, started: str) -> dict:
    return {
        "input_hash": input_hash(spec),
        "stage": plan.stage,
        "solver": asdict(plan.solver),
        "finance": {"wacc": plan.finance.wacc, "lifetime_overrides": dict(plan.finance.lifetime_overrides)},
        "version": __version__,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _check(sol: Solution, scenario: str, combo: Optional[str] = None) -> Solution:
    if sol.status != "optimal":
        raise WorkflowError(f"solver returned {sol.status}", scenario, combo)
    return sol


def _clean(v: float) -> float:
    return max(0.0, round(float(v), 6))


def expansion_capacities(spec: SystemSpec, problem, sol: Solution) -> tuple[dict, dict]:
    caps = {r.name: _clean(capacity(problem, sol.x, r)) for r in spec.resources}
    energy = {r.name: _clean(energy_capacity(problem, sol.x, r.name)) for r in spec.resources if r.is_storage}
    return caps, energy


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _stage_a_cell(spec: SystemSpec, pol: PolicyEnv, fin: FinanceParams, opts: SolverOptions) -> StageAResult:
    p = build_model(spec, pol, fin, BuildMode.expansion())
    sol = _check(solve(p, opts), pol.label())
    caps, energy = expansion_capacities(spec, p, sol)
    return StageAResult(pol, caps, energy, sol.objective, sol)


def run_stage_a(spec: SystemSpec, policies: Sequence[PolicyEnv], fin: Optional[FinanceParams] = None,
                opts: Optional[SolverOptions] = None, plant: str = "ccs", workers: int = 1) -> dict:
    """Expansion without the study plant, one solve per policy, keyed by policy label."""
    base = spec.without_resource(plant) if plant in spec.names() else spec
    fin = fin or FinanceParams()
    opts = opts or SolverOptions()
    res = _map(_stage_a_cell, [(base, pol, fin, opts) for pol in policies], workers)
    return {r.policy.label(): r for r in res}


def _plant_for_stage_b(spec: SystemSpec, plan: StagePlan):
    if plan.plant in spec.names():
        r = spec.resource(plan.plant)
        return replace(r, existing_cap=plan.plant_capacity, can_expand=False, can_retire=False, max_cap=None)
    return ccs_plant(plan.plant, existing_cap=plan.plant_capacity, unit_size=plan.plant_capacity)


def _trace(spec, p, sol, name):
    T = spec.horizon_hours
    cols = p.index.series("vP", name, T)
    return np.where(cols >= 0, sol.x[np.maximum(cols, 0)], 0.0)


def _renewables(spec: SystemSpec, caps: dict) -> float:
    return float(sum(caps[r.name] for r in spec.resources if r.is_vre))


def _stage_b_cell(spec: SystemSpec, pol: PolicyEnv, combo: frozenset, caps: dict, energy: dict,
                  plan: StagePlan) -> CellResult:
    flex = flex_combo(combo, plan.worst, plan.best)
    plant = replace(spec.resource(plan.plant), flex=flex)
    s = spec.with_resource(plant)
    p = build_model(s, pol, plan.finance, BuildMode.dispatch(caps, energy))
    sol = _check(solve(p, plan.solver), pol.label(), combo_label(combo))
    priced = _check(fix_and_price(p, sol, plan.solver), pol.label(), combo_label(combo))
    prices = hourly_prices(s, p, priced)
    profit = operating_profit(s, pol, p, sol, prices, plan.plant)
    metrics = compute_metrics(s, p, sol, pol, plan.finance)
    tsc = total_system_cost(s, pol, plan.finance, p, sol)
    return CellResult(pol, combo, flex, sol.objective, tsc.without_transfers, caps[plan.plant],
                      _renewables(s, caps), dict(caps), metrics, profit, prices, _trace(s, p, sol, plan.plant),
                      effective_marginal_cost(plant, pol), dict(sol.stats))


def run_stage_b(spec: SystemSpec, stage_a: dict, plan: StagePlan) -> SweepReport:
    """Dispatch the fixed stage-A fleet plus the study plant for every (policy, combo)."""
    started = _now()
    plant = _plant_for_stage_b(spec, plan)
    s = spec.with_resource(plant)
    jobs = []
    for pol in plan.policies:
        a = stage_a.get(pol.label())
        if a is None:
            raise WorkflowError("no stage-A capacities for this policy", pol.label())
        caps = dict(a.capacities)
        caps[plan.plant] = plan.plant_capacity
        missing = [n for n in s.names() if n not in caps]
        if missing:
            raise WorkflowError(f"stage-A capacities lack {missing}", pol.label())
        for combo in plan.combos:
            jobs.append((s, pol, combo, caps, dict(a.energy), plan))
    cells = _map(_stage_b_cell, jobs, plan.workers)
    return SweepReport("B", cells, _provenance(s, plan, started), plan.plant)


def _stage_c_cell(spec: SystemSpec, pol: PolicyEnv, combo: frozenset, plan: StagePlan) -> CellResult:
    flex = flex_combo(combo, plan.worst, plan.best)
    s = spec.with_resource(replace(spec.resource(plan.plant), flex=flex))
    p = build_model(s, pol, plan.finance, BuildMode.expansion())
    sol = _check(solve(p, plan.solver), pol.label(), combo_label(combo))
    caps, _ = expansion_capacities(s, p, sol)
    metrics = compute_metrics(s, p, sol, pol, plan.finance)
    tsc = total_system_cost(s, pol, plan.finance, p, sol)
    plant = s.resource(plan.plant)
    return CellResult(pol, combo, flex, sol.objective, tsc.without_transfers, caps[plan.plant],
                      _renewables(s, caps), caps, metrics, None, None, _trace(s, p, sol, plan.plant),
                      effective_marginal_cost(plant, pol), dict(sol.stats))


def _freeze_fleet(spec: SystemSpec, caps: dict, energy: dict, plant: str) -> SystemSpec:
    out = spec
    for r in spec.resources:
        if r.name == plant:
            continue
        kw = dict(existing_cap=caps[r.name], can_expand=False, can_retire=False, max_cap=None)
        if r.is_storage:
            kw["existing_energy"] = energy.get(r.name, r.existing_energy)
        out = out.with_resource(replace(r, **kw))
    return out


def run_stage_c(spec: SystemSpec, plan: StagePlan, stage_a: Optional[dict] = None) -> SweepReport:
    """Expansion with the study plant buildable, for every (policy, combo).

    With ``plan.joint_expansion`` false the rest of the fleet is frozen at
    its stage-A capacities and only the plant is sized.
    """
    started = _now()
    r = spec.resource(plan.plant)
    if not r.can_expand:
        raise WorkflowError(f"stage C needs {plan.plant} to be expandable")
    jobs = []
    for pol in plan.policies:
        s = spec
        if not plan.joint_expansion:
            if stage_a is None or pol.label() not in stage_a:
                raise WorkflowError("fixed-fleet stage C needs stage-A capacities", pol.label())
            a = stage_a[pol.label()]
            s = _freeze_fleet(spec, a.capacities, a.energy, plan.plant)
        for combo in plan.combos:
            jobs.append((s, pol, combo, plan))
    cells = _map(_stage_c_cell, jobs, plan.workers)
    return SweepReport("C", cells, _provenance(spec, plan, started), plan.plant)


def run_plan(spec: SystemSpec, plan: StagePlan, stage_a: Optional[dict] = None):
    if plan.stage == "A":
        return run_stage_a(spec, plan.policies, plan.finance, plan.solver, plan.plant, plan.workers)
    if plan.stage == "B":
        if stage_a is None:
            stage_a = run_stage_a(spec, plan.policies, plan.finance, plan.solver, plan.plant, plan.workers)
        return run_stage_b(spec, stage_a, plan)
    if not plan.joint_expansion and stage_a is None:
        stage_a = run_stage_a(spec, plan.policies, plan.finance, plan.solver, plan.plant, plan.workers)
    return run_stage_c(spec, plan, stage_a)
