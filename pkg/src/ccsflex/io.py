"""Input bundles (CSV + YAML) and report files.

An input directory holds::

    demand.csv      hour,load_mw
    profiles.csv    hour,resource,availability
    resources.csv   one row per resource, columns in RESOURCE_COLUMNS
    config.yaml     keys in CONFIG_SCHEMA

Hours are 1-based and must be contiguous.  Every problem found while
loading is collected with its file and line before anything is raised.

Reports are written as CSV tables plus one JSON document holding every
number at full precision, so tables can be regenerated from the JSON alone.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources as _res
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .accounting import ALL_TOGETHER, SUM_OF_SINGLES, combo_label
from .domain import (
    FLEXIBLE,
    HOURS_PER_YEAR,
    INFLEXIBLE,
    FinanceParams,
    FlexParams,
    PolicyEnv,
    ResourceSpec,
    SystemSpec,
    validate_policy,
    validate_system,
)
from .solver import SolverOptions
from .workflow import PARAMS, StagePlan, SweepReport, all_combos, parse_combo, table_cells, table_columns, table_combos

DATA_FILES = ("demand.csv", "profiles.csv", "resources.csv", "config.yaml")

# column -> (type, unit, default); a default of None means optional/blank
RESOURCE_COLUMNS = {
    "name": (str, "", ...),
    "class": (str, "", ...),
    "existing_cap": (float, "MW", 0.0),
    "can_expand": (bool, "", False),
    "can_retire": (bool, "", False),
    "unit_size": (float, "MW", 0.0),
    "max_cap": (float, "MW", None),
    "capex_power": (float, "$/kW", 0.0),
    "capex_energy": (float, "$/kWh", 0.0),
    "fom_power": (float, "$/kW-yr", 0.0),
    "fom_energy": (float, "$/kWh-yr", 0.0),
    "vom": (float, "$/MWh", 0.0),
    "heat_rate": (float, "MMBtu/MWh", 0.0),
    "fuel_price": (float, "$/MMBtu", 0.0),
    "emission_factor": (float, "tCO2/MMBtu", 0.0),
    "capture_rate": (float, "fraction", 0.0),
    "ces_qualifying": (bool, "", False),
    "ptc": (float, "$/MWh", 0.0),
    "itc_fraction": (float, "fraction", 0.0),
    "lifetime_years": (float, "yr", 30.0),
    "existing_energy": (float, "MWh", 0.0),
    "eff_charge": (float, "fraction", None),
    "eff_discharge": (float, "fraction", None),
    "storage_duration_max": (float, "h", None),
    "tech": (str, "", ""),
    "min_load": (float, "fraction", None),
    "ramp_rate": (float, "fraction/h", None),
    "min_up": (int, "h", None),
    "min_down": (int, "h", None),
    "startup_cost": (float, "$/MW", None),
    "startup_fuel": (float, "MMBtu/MW", None),
}
_FLEX_COLUMNS = ("min_load", "ramp_rate", "min_up", "min_down", "startup_cost", "startup_fuel")

CONFIG_SCHEMA = {
    "system": {"nse_penalty": "$/MWh", "hour_weight": "multiplier or 'annual' (8760/T)"},
    "finance": {"wacc": "fraction/yr", "lifetime_overrides": "resource -> years"},
    "flexibility": {"plant": "resource name", "worst": "FlexParams", "best": "FlexParams"},
    "policies": "list of PolicyEnv mappings",
    "stage_plan": {"plant_capacity": "MW", "combos": "'table' | 'all' | list of 'P1+P2' strings",
                   "joint_expansion": "bool", "workers": "int"},
    "solver": {"eps_feas": "", "eps_int": "", "mip_gap": "", "abs_gap": "", "node_limit": "",
               "time_limit": "s", "backend": "internal | external", "external_command": "template",
               "branching": "most-fractional | pseudocost"},
}
_POLICY_KEYS = {f.name for f in fields(PolicyEnv)}
_FLEX_KEYS = {f.name for f in fields(FlexParams)}


class InputError(ValueError):
    """Carries every problem found, each already prefixed with its location."""

    def __init__(self, issues: list[str]):
        super().__init__("\n".join(issues))
        self.issues = list(issues)


@dataclass
class InputBundle:
    spec: SystemSpec
    policies: tuple
    finance: FinanceParams
    solver: SolverOptions
    plant: str = "ccs"
    worst: FlexParams = INFLEXIBLE
    best: FlexParams = FLEXIBLE
    plant_capacity: float = 500.0
    combos: tuple = ()
    joint_expansion: bool = True
    workers: int = 1
    source_hash: str = ""
    config: dict = field(default_factory=dict)

    def plan(self, stage: str, **overrides) -> StagePlan:
        kw = dict(stage=stage, policies=self.policies, combos=self.combos if stage.upper() != "A" else (),
                  plant=self.plant, plant_capacity=self.plant_capacity, joint_expansion=self.joint_expansion,
                  solver=self.solver, finance=self.finance, workers=self.workers, worst=self.worst, best=self.best)
        kw.update(overrides)
        return StagePlan(**kw)

    def policy(self, label: Optional[str]) -> PolicyEnv:
        if label is None:
            return self.policies[0]
        for p in self.policies:
            if p.label() == label:
                return p
        raise InputError([f"config.yaml: no policy labelled {label!r}; have {[p.label() for p in self.policies]}"])


def bundled_dataset(name: str = "texas-toy") -> Path:
    """Path of a dataset shipped inside the package."""
    return Path(str(_res.files("ccsflex") / "data" / name))


# ---------------------------------------------------------------- reading


def _parse_scalar(kind, text: str):
    if kind is bool:
        t = text.strip().lower()
        if t in ("1", "true", "yes", "y"):
            return True
        if t in ("0", "false", "no", "n"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        v = float(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if kind is float:
        v = float(text)
        if math.isnan(v):
            raise ValueError("NaN is not allowed")
        return v
    return text.strip()


def _read_csv(path: Path, required: tuple, issues: list) -> list[tuple[int, dict]]:
    if not path.exists():
        issues.append(f"{path.name}: file is missing")
        return []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            issues.append(f"{path.name}:1: missing column(s) {missing}")
            return []
        rows = []
        for row in reader:
            line = reader.line_num
            if None in row:
                issues.append(f"{path.name}:{line}: too many fields")
                continue
            if any(v is None for v in row.values()):
                issues.append(f"{path.name}:{line}: too few fields")
                continue
            rows.append((line, row))
        return rows


def _hours_contiguous(fname: str, hours: list[tuple[int, int]], issues: list, what: str = "") -> Optional[int]:
    if not hours:
        issues.append(f"{fname}: no rows{what}")
        return None
    seen = {}
    for line, h in hours:
        if h in seen:
            issues.append(f"{fname}:{line}: duplicate hour {h}{what} (first on line {seen[h]})")
        seen[h] = line
    T = max(seen)
    gaps = [h for h in range(1, T + 1) if h not in seen]
    if min(seen) < 1:
        issues.append(f"{fname}: hours must start at 1{what}")
    if gaps:
        issues.append(f"{fname}: hours are not contiguous{what}; missing {gaps[:10]}")
    return T


def _read_demand(d: Path, issues: list):
    rows = _read_csv(d / "demand.csv", ("hour", "load_mw"), issues)
    hours, loads = [], {}
    for line, row in rows:
        try:
            h = _parse_scalar(int, row["hour"])
            v = _parse_scalar(float, row["load_mw"])
        except ValueError as e:
            issues.append(f"demand.csv:{line}: {e}")
            continue
        hours.append((line, h))
        loads[h] = v
    T = _hours_contiguous("demand.csv", hours, issues)
    if T is None:
        return None, None
    return T, np.array([loads.get(h, math.nan) for h in range(1, T + 1)])


def _read_resources(d: Path, issues: list) -> list[ResourceSpec]:
    rows = _read_csv(d / "resources.csv", ("name", "class"), issues)
    out = []
    for line, row in rows:
        unknown = [k for k in row if k not in RESOURCE_COLUMNS]
        if unknown:
            issues.append(f"resources.csv:{line}: unknown column(s) {unknown}")
            continue
        vals = {}
        ok = True
        for col, (kind, _unit, default) in RESOURCE_COLUMNS.items():
            text = row.get(col, "")
            text = "" if text is None else text
            if text.strip() == "":
                if default is ...:
                    issues.append(f"resources.csv:{line}: column {col!r} is required")
                    ok = False
                vals[col] = None if default is ... else default
                continue
            try:
                vals[col] = _parse_scalar(kind, text)
            except ValueError as e:
                issues.append(f"resources.csv:{line}: column {col!r}: {e}")
                ok = False
        if not ok:
            continue
        flex_vals = {k: vals.pop(k) for k in _FLEX_COLUMNS}
        flex = None
        if any(v is not None for v in flex_vals.values()):
            missing = [k for k, v in flex_vals.items() if v is None and k != "startup_fuel"]
            if missing:
                issues.append(f"resources.csv:{line}: flexibility columns {missing} are blank")
                continue
            if flex_vals["startup_fuel"] is None:
                flex_vals.pop("startup_fuel")
            flex = FlexParams(**flex_vals)
        vals["resource_class"] = vals.pop("class")
        out.append((line, ResourceSpec(flex=flex, **vals)))
    names = {}
    for line, r in out:
        if r.name in names:
            issues.append(f"resources.csv:{line}: duplicate resource name {r.name!r} (first on line {names[r.name]})")
        names[r.name] = line
        if not r.name.replace("_", "").replace("-", "").isalnum():
            issues.append(f"resources.csv:{line}: resource name {r.name!r} must be letters, digits, '_' or '-'")
    return [r for _, r in out]


def _read_profiles(d: Path, T: Optional[int], resources: list, issues: list) -> dict:
    rows = _read_csv(d / "profiles.csv", ("hour", "resource", "availability"), issues)
    by_name = {r.name: r for r in resources}
    per: dict[str, dict] = {}
    lines: dict[str, list] = {}
    for line, row in rows:
        name = row["resource"].strip()
        if name not in by_name:
            issues.append(f"profiles.csv:{line}: unknown resource {name!r}")
            continue
        if not by_name[name].is_vre:
            issues.append(f"profiles.csv:{line}: resource {name!r} is not a vre resource")
            continue
        try:
            h = _parse_scalar(int, row["hour"])
            v = _parse_scalar(float, row["availability"])
        except ValueError as e:
            issues.append(f"profiles.csv:{line}: {e}")
            continue
        per.setdefault(name, {})[h] = v
        lines.setdefault(name, []).append((line, h))
    out = {}
    for name, vals in per.items():
        Tp = _hours_contiguous("profiles.csv", lines[name], issues, f" for {name!r}")
        if T is not None and Tp is not None and Tp != T:
            issues.append(f"profiles.csv: {name!r} covers {Tp} hours but demand.csv covers {T}")
        out[name] = np.array([vals.get(h, math.nan) for h in range(1, (Tp or 0) + 1)])
    return out


def _flex_from(cfg: Any, where: str, issues: list, base: FlexParams) -> FlexParams:
    if cfg is None:
        return base
    if not isinstance(cfg, dict):
        issues.append(f"config.yaml: {where} must be a mapping")
        return base
    unknown = set(cfg) - _FLEX_KEYS
    if unknown:
        issues.append(f"config.yaml: {where} has unknown key(s) {sorted(unknown)}")
        return base
    try:
        return replace(base, **cfg)
    except TypeError as e:
        issues.append(f"config.yaml: {where}: {e}")
        return base


def _section(cfg: dict, key: str, issues: list, allowed: Optional[set] = None) -> dict:
    v = cfg.get(key) or {}
    if not isinstance(v, dict):
        issues.append(f"config.yaml: {key!r} must be a mapping")
        return {}
    if allowed is not None:
        unknown = set(v) - allowed
        if unknown:
            issues.append(f"config.yaml: {key} has unknown key(s) {sorted(unknown)}")
    return v


def _read_config(d: Path, issues: list) -> dict:
    path = d / "config.yaml"
    if not path.exists():
        issues.append("config.yaml: file is missing")
        return {}
    try:
        cfg = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f":{mark.line + 1}:{mark.column + 1}" if mark else ""
        issues.append(f"config.yaml{loc}: {getattr(e, 'problem', e)}")
        return {}
    if not isinstance(cfg, dict):
        issues.append("config.yaml: top level must be a mapping")
        return {}
    unknown = set(cfg) - set(CONFIG_SCHEMA)
    if unknown:
        issues.append(f"config.yaml: unknown section(s) {sorted(unknown)}")
    return cfg


def _hash_dir(d: Path) -> str:
    h = hashlib.sha256()
    for name in DATA_FILES:
        p = d / name
        if p.exists():
            h.update(name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def load_inputs(path) -> InputBundle:
    """Read and validate an input directory; raises :class:`InputError` listing every problem."""
    d = Path(path)
    if not d.is_dir():
        raise InputError([f"{d}: not a directory"])
    issues: list[str] = []
    T, demand = _read_demand(d, issues)
    resources = _read_resources(d, issues)
    profiles = _read_profiles(d, T, resources, issues)
    cfg = _read_config(d, issues)

    system = _section(cfg, "system", issues, set(CONFIG_SCHEMA["system"]))
    fin_cfg = _section(cfg, "finance", issues, set(CONFIG_SCHEMA["finance"]))
    flex_cfg = _section(cfg, "flexibility", issues, set(CONFIG_SCHEMA["flexibility"]))
    plan_cfg = _section(cfg, "stage_plan", issues, set(CONFIG_SCHEMA["stage_plan"]))
    solver_cfg = _section(cfg, "solver", issues, set(CONFIG_SCHEMA["solver"]))

    hw = system.get("hour_weight", 1.0)
    if hw == "annual":
        hw = HOURS_PER_YEAR / T if T else 1.0
    try:
        finance = FinanceParams(wacc=float(fin_cfg.get("wacc", FinanceParams().wacc)),
                                lifetime_overrides=dict(fin_cfg.get("lifetime_overrides") or {}))
        if not 0 < finance.wacc < 1:
            issues.append("config.yaml: finance.wacc must lie in (0, 1)")
    except (TypeError, ValueError) as e:
        issues.append(f"config.yaml: finance: {e}")
        finance = FinanceParams()
    try:
        solver = SolverOptions(**solver_cfg)
    except (TypeError, ValueError) as e:
        issues.append(f"config.yaml: solver: {e}")
        solver = SolverOptions()

    policies = []
    pol_cfg = cfg.get("policies") or [{}]
    if not isinstance(pol_cfg, list):
        issues.append("config.yaml: policies must be a list")
        pol_cfg = []
    for k, p in enumerate(pol_cfg):
        if not isinstance(p, dict) or set(p) - _POLICY_KEYS:
            issues.append(f"config.yaml: policies[{k}] has unknown key(s) {sorted(set(p) - _POLICY_KEYS) if isinstance(p, dict) else p}")
            continue
        pol = PolicyEnv(**p)
        issues.extend(f"config.yaml: policies[{k}]: {v}" for v in validate_policy(pol))
        policies.append(pol)

    worst = _flex_from(flex_cfg.get("worst"), "flexibility.worst", issues, INFLEXIBLE)
    best = _flex_from(flex_cfg.get("best"), "flexibility.best", issues, FLEXIBLE)
    plant = flex_cfg.get("plant", "ccs")
    combos_cfg = plan_cfg.get("combos", "table")
    combos: tuple = ()
    try:
        if combos_cfg == "table":
            combos = tuple(table_combos())
        elif combos_cfg == "all":
            combos = tuple(all_combos())
        elif isinstance(combos_cfg, list):
            combos = tuple(parse_combo(str(c)) for c in combos_cfg)
        else:
            issues.append(f"config.yaml: stage_plan.combos must be 'table', 'all' or a list, got {combos_cfg!r}")
    except ValueError as e:
        issues.append(f"config.yaml: stage_plan.combos: {e}")

    if issues:
        raise InputError(issues)
    spec = SystemSpec(T, demand, tuple(resources), profiles,
                      nse_penalty=float(system.get("nse_penalty", 9000.0)), hour_weight=float(hw))
    report = validate_system(spec)
    issues.extend(f"resources.csv/profiles.csv: {v}" for v in report)
    if plant not in spec.names():
        issues.append(f"config.yaml: flexibility.plant {plant!r} is not a resource")
    elif not spec.resource(plant).is_uc:
        issues.append(f"config.yaml: flexibility.plant {plant!r} is not a thermal-uc resource")
    if issues:
        raise InputError(issues)
    return InputBundle(
        spec=spec, policies=tuple(policies), finance=finance, solver=solver, plant=plant, worst=worst,
        best=best, plant_capacity=float(plan_cfg.get("plant_capacity", 500.0)), combos=combos,
        joint_expansion=bool(plan_cfg.get("joint_expansion", True)), workers=int(plan_cfg.get("workers", 1)),
        source_hash=_hash_dir(d), config=cfg,
    )


# ---------------------------------------------------------------- writing inputs


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_inputs(spec: SystemSpec, path, config: Optional[dict] = None) -> list[Path]:
    """Write ``spec`` (and a config) in the layout :func:`load_inputs` reads."""
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    T = spec.horizon_hours
    files = []
    with open(d / "demand.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["hour", "load_mw"])
        for t in range(T):
            w.writerow([t + 1, _fmt(spec.demand[t])])
    files.append(d / "demand.csv")
    with open(d / "profiles.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["hour", "resource", "availability"])
        for r in spec.resources:
            if r.name in spec.vre_profiles:
                for t in range(T):
                    w.writerow([t + 1, r.name, _fmt(spec.vre_profiles[r.name][t])])
    files.append(d / "profiles.csv")
    with open(d / "resources.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(RESOURCE_COLUMNS))
        for r in spec.resources:
            row = asdict(r)
            row["class"] = row.pop("resource_class")
            flex = row.pop("flex")
            for k in _FLEX_COLUMNS:
                row[k] = flex[k] if flex else None
            w.writerow([_fmt(row[c]) for c in RESOURCE_COLUMNS])
    files.append(d / "resources.csv")
    cfg = dict(config or {})
    cfg.setdefault("system", {})
    cfg["system"] = {"nse_penalty": float(spec.nse_penalty), "hour_weight": cfg["system"].get("hour_weight", float(spec.hour_weight)), **{k: v for k, v in cfg["system"].items() if k not in ("nse_penalty", "hour_weight")}}
    with open(d / "config.yaml", "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=False)
    files.append(d / "config.yaml")
    return files


def policy_dict(p: PolicyEnv) -> dict:
    base = PolicyEnv()
    return {k: v for k, v in asdict(p).items() if v != getattr(base, k)}


def flex_dict(fp: FlexParams) -> dict:
    return asdict(fp)


# ---------------------------------------------------------------- reports


def millions(v: float) -> str:
    """Million dollars at one decimal, locale independent."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    out = f"{v / 1e6:.1f}"
    return "0.0" if out == "-0.0" else out


def gigawatts(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    out = f"{v / 1e3:.1f}"
    return "0.0" if out == "-0.0" else out


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def report_bundle(report: SweepReport) -> dict:
    """Plain-data form of a sweep; every float kept at full precision."""
    cells = []
    for c in report.cells:
        m = c.metrics[report.plant] if report.plant in c.metrics.resources else None
        entry = {
            "scenario": c.scenario,
            "policy": asdict(c.policy),
            "combo": sorted(c.combo),
            "flex": flex_dict(c.flex),
            "tsc": _num(c.tsc),
            "tsc_without_transfers": _num(c.tsc_without_transfers),
            "plant_capacity": _num(c.plant_capacity),
            "renewable_capacity": _num(c.renewable_capacity),
            "capacities": {k: _num(v) for k, v in sorted(c.capacities.items())},
            "plant_marginal_cost": _num(c.plant_marginal_cost),
            "nse": _num(c.metrics.nse),
            "plant_metrics": None if m is None else {
                "capacity_factor": m.capacity_factor, "generation": m.generation, "startups": m.startups,
                "captured_t": m.captured_t, "emitted_t": m.emitted_t,
                "up_spells": [list(x) for x in m.up_spells], "down_spells": [list(x) for x in m.down_spells],
            },
            "curtailed": _num(sum(r.curtailed for r in c.metrics.resources.values())),
            "profit": None if c.profit is None else {**{k: _num(v) for k, v in asdict(c.profit).items()},
                                                      "operating_profit": _num(c.profit.operating_profit)},
            "prices": None if c.prices is None else [float(v) for v in c.prices],
            "plant_output": None if c.plant_output is None else [float(v) for v in c.plant_output],
        }
        cells.append(entry)
    return {"stage": report.stage, "plant": report.plant, "cells": cells, "provenance": report.provenance}


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in s)


def _csv_text(rows: list[list]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


SUMMARY_HEADER = ["combo", "operating_profit_musd", "profit_delta_musd", "plant_capacity_gw",
                  "capacity_delta_gw", "tsc_musd", "tsc_delta_musd", "capacity_factor", "startups"]


def _table_header() -> list[str]:
    return ["improved"] + [combo_label(c) for c in table_columns()]


def _layout(values: dict, fmt) -> list[list]:
    """Rows P1..P5 by the 17 combination columns; blank where not applicable or not run."""
    rows = [_table_header()]
    cells = table_cells()
    for p in PARAMS:
        row = [p]
        for rp, _col, combo in cells:
            if rp != p:
                continue
            if combo is None or combo not in values:
                row.append("-")
            else:
                row.append(fmt(values[combo]))
        rows.append(row)
    return rows


def delta_tables(bundle: dict) -> dict[str, str]:
    """File name -> CSV text for every table derived from ``bundle``."""
    out = {}
    stage = bundle["stage"]
    scenarios = []
    for c in bundle["cells"]:
        if c["scenario"] not in scenarios:
            scenarios.append(c["scenario"])
    for sc in scenarios:
        cells = {frozenset(c["combo"]): c for c in bundle["cells"] if c["scenario"] == sc}
        base = cells.get(frozenset())
        if base is None:
            continue
        slug = _slug(sc)

        def delta(key):
            return {k: (v[key] - base[key]) if v[key] is not None and base[key] is not None else math.nan
                    for k, v in cells.items() if k}

        def profit_of(c):
            return c["profit"]["operating_profit"] if c["profit"] else None

        if stage == "B":
            prof = {k: profit_of(v) - profit_of(base) for k, v in cells.items() if k}
            out[f"profit_delta_{slug}.csv"] = _csv_text(_layout(prof, millions))
        if stage == "C":
            out[f"capacity_delta_{slug}.csv"] = _csv_text(_layout(delta("plant_capacity"), gigawatts))
        out[f"tsc_delta_{slug}.csv"] = _csv_text(_layout(delta("tsc"), millions))

        summary = [SUMMARY_HEADER]
        singles = {"profit": 0.0, "cap": 0.0, "tsc": 0.0}
        n_single = 0
        full = None
        for combo in sorted(cells, key=lambda c: (len(c), sorted(c))):
            c = cells[combo]
            pm = c["plant_metrics"] or {}
            p, pb = profit_of(c), profit_of(base)
            dp = (p - pb) if p is not None and pb is not None else None
            dc = c["plant_capacity"] - base["plant_capacity"]
            dt = c["tsc"] - base["tsc"]
            summary.append([combo_label(combo), millions(p), millions(dp), gigawatts(c["plant_capacity"]),
                            gigawatts(dc), millions(c["tsc"]), millions(dt),
                            f"{pm.get('capacity_factor', 0.0):.3f}", str(pm.get("startups", 0))])
            if len(combo) == 1:
                n_single += 1
                singles["profit"] += dp or 0.0
                singles["cap"] += dc
                singles["tsc"] += dt
            if combo == frozenset(PARAMS):
                full = (dp, dc, dt)
        if n_single:
            summary.append([SUM_OF_SINGLES, "", millions(singles["profit"]) if stage == "B" else "", "",
                            gigawatts(singles["cap"]), "", millions(singles["tsc"]), "", ""])
        if full is not None:
            summary.append([ALL_TOGETHER, "", millions(full[0]), "", gigawatts(full[1]), "", millions(full[2]), "", ""])
        out[f"summary_{slug}.csv"] = _csv_text(summary)

        for combo, c in sorted(cells.items(), key=lambda kv: (len(kv[0]), sorted(kv[0]))):
            if c["plant_output"] is None:
                continue
            rows = [["hour", "output_mw", "price_usd_mwh", "marginal_cost_usd_mwh"]]
            prices = c["prices"] or [None] * len(c["plant_output"])
            for t, (q, pr) in enumerate(zip(c["plant_output"], prices), start=1):
                rows.append([t, f"{q:.3f}", "" if pr is None else f"{pr:.4f}", f"{c['plant_marginal_cost']:.4f}"])
            out[f"dispatch/{slug}__{_slug(combo_label(combo))}.csv"] = _csv_text(rows)
    if not scenarios:
        # an empty sweep still gets every table, header only
        if stage == "B":
            out["profit_delta.csv"] = _csv_text([_table_header()])
        if stage == "C":
            out["capacity_delta.csv"] = _csv_text([_table_header()])
        out["tsc_delta.csv"] = _csv_text([_table_header()])
        out["summary.csv"] = _csv_text([SUMMARY_HEADER])
    return out


def write_tables(bundle: dict, path) -> list[Path]:
    d = Path(path)
    written = []
    for name, text in sorted(delta_tables(bundle).items()):
        p = d / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        written.append(p)
    return written


def emit_report(report: SweepReport, path, extra_provenance: Optional[dict] = None) -> list[Path]:
    """Write tables, the full-precision JSON and a manifest into ``path``."""
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create report directory {d}: {e}") from e
    bundle = report_bundle(report)
    if extra_provenance:
        bundle["provenance"] = {**bundle["provenance"], **extra_provenance}
    results = d / "results.json"
    results.write_text(json.dumps(bundle, indent=1, sort_keys=True) + "\n")
    files = [results] + write_tables(bundle, d)
    write_manifest(d, files, bundle["provenance"])
    return files + [d / "manifest.json"]


def write_manifest(d: Path, files: list[Path], provenance: dict) -> Path:
    entries = {}
    for p in sorted(files):
        entries[str(p.relative_to(d))] = hashlib.sha256(p.read_bytes()).hexdigest()
    man = {"provenance": provenance, "files": entries}
    out = d / "manifest.json"
    out.write_text(json.dumps(man, indent=1, sort_keys=True) + "\n")
    return out


def regenerate(results_path) -> list[Path]:
    """Rebuild every table next to an existing ``results.json``."""
    p = Path(results_path)
    if p.is_dir():
        p = p / "results.json"
    bundle = json.loads(p.read_text())
    files = write_tables(bundle, p.parent)
    write_manifest(p.parent, [p] + files, bundle.get("provenance", {}))
    return files


def read_fixed_caps(path) -> tuple[dict, dict]:
    """``resource,capacity_mw[,energy_mwh]`` CSV -> (power, energy) maps."""
    issues: list[str] = []
    p = Path(path)
    rows = _read_csv(p, ("resource", "capacity_mw"), issues)
    caps, energy = {}, {}
    for line, row in rows:
        try:
            caps[row["resource"].strip()] = _parse_scalar(float, row["capacity_mw"])
            e = (row.get("energy_mwh") or "").strip()
            if e:
                energy[row["resource"].strip()] = _parse_scalar(float, e)
        except ValueError as ex:
            issues.append(f"{p.name}:{line}: {ex}")
    if issues:
        raise InputError(issues)
    return caps, energy


def write_fixed_caps(path, caps: dict, energy: dict) -> Path:
    rows = [["resource", "capacity_mw", "energy_mwh"]]
    for k in caps:
        rows.append([k, _fmt(caps[k]), _fmt(energy.get(k))])
    p = Path(path)
    p.write_text(_csv_text(rows))
    return p
