"""Shared builders and an independent physical-feasibility checker."""
from __future__ import annotations

import math

import numpy as np

from ccsflex.domain import (
    FlexParams,
    PolicyEnv,
    ResourceSpec,
    SystemSpec,
    ccs_plant,
)
from ccsflex.formulation import BuildMode, Problem, build_model, capacity, energy_capacity

EPS_FEAS = 1e-6


def series(problem: Problem, x, kind: str, name, T: int) -> np.ndarray:
    cols = problem.index.series(kind, name, T)
    out = np.zeros(T)
    out[cols >= 0] = x[cols[cols >= 0]]
    return out


def physical_violations(spec: SystemSpec, problem: Problem, x, tol: float = EPS_FEAS) -> list[str]:
    """Re-check a solution against the physics, hour by hour.

    Works from the column values and the resource data only; the model's
    own rows are never consulted.  Returns human-readable complaints.
    """
    x = np.asarray(x, float)
    T = spec.horizon_hours
    bad = []
    net = series(problem, x, "nse", None, T)
    if (net < -tol).any():
        bad.append("negative nse")
    prev = np.roll(np.arange(T), 1)
    for r in spec.resources:
        cap = capacity(problem, x, r)
        scale = max(1.0, cap)
        if r.is_storage:
            ch = series(problem, x, "charge", r.name, T)
            dis = series(problem, x, "discharge", r.name, T)
            soc = series(problem, x, "soc", r.name, T)
            capE = energy_capacity(problem, x, r.name)
            net += dis - ch
            drift = soc - soc[prev] - r.eff_charge * ch + dis / r.eff_discharge
            if np.abs(drift).max() > tol * max(1.0, capE):
                bad.append(f"{r.name}: SOC recursion off by {np.abs(drift).max():.3g}")
            if (soc < -tol).any() or (soc > capE + tol * max(1.0, capE)).any():
                bad.append(f"{r.name}: SOC outside [0, {capE}]")
            if (ch < -tol).any() or (dis < -tol).any() or max(ch.max(), dis.max()) > cap + tol * scale:
                bad.append(f"{r.name}: charge/discharge outside power rating")
            continue
        p = series(problem, x, "vP", r.name, T)
        net += p
        if (p < -tol).any():
            bad.append(f"{r.name}: negative output")
        if r.is_vre:
            avail = spec.vre_profiles[r.name] * cap
            if (p > avail + tol * scale).any():
                bad.append(f"{r.name}: output above availability")
        elif not r.is_uc and (p > cap + tol * scale).any():
            bad.append(f"{r.name}: output above capacity")
        if r.is_uc:
            bad += _uc_violations(problem, x, r, cap, p, tol)
    residual = net - spec.demand
    if np.abs(residual).max() > tol * max(1.0, float(spec.demand.max())):
        bad.append(f"energy balance off by {np.abs(residual).max():.3g} MW")
    return bad


def _uc_violations(problem, x, r: ResourceSpec, cap: float, p, tol) -> list[str]:
    T = len(p)
    U = r.unit_size
    f: FlexParams = r.flex
    c = series(problem, x, "commit", r.name, T)
    s = series(problem, x, "start", r.name, T)
    d = series(problem, x, "shut", r.name, T)
    bad = []
    for name, v in (("commit", c), ("start", s), ("shut", d)):
        if np.abs(v - np.round(v)).max() > 1e-5:
            bad.append(f"{r.name}: fractional {name}")
    c, s, d = np.round(c), np.round(s), np.round(d)
    n = math.floor(cap / U + 1e-9)
    if (c < 0).any() or (c > n).any():
        bad.append(f"{r.name}: commit outside [0, {n}]")
    if (p > U * c + tol * U).any():
        bad.append(f"{r.name}: output above committed capacity")
    if (p < f.min_load * U * c - tol * U).any():
        bad.append(f"{r.name}: output below minimum load")
    cp = np.roll(c, 1)
    if np.abs(c - cp - s + d).max() > 0.5:
        bad.append(f"{r.name}: start/shut do not explain commit changes")
    for t in range(T):
        up_members = [(t - k) % T for k in range(f.min_up)]
        down_members = [(t - k) % T for k in range(f.min_down)]
        if s[up_members].sum() > c[t] + 0.5:
            bad.append(f"{r.name}: min-up violated at hour {t + 1}")
        if d[down_members].sum() > n - c[t] + 0.5:
            bad.append(f"{r.name}: min-down violated at hour {t + 1}")
    pp = np.roll(p, 1)
    ru = f.ramp_rate * U
    if (p - pp > ru * (c - s) + U * s + tol * U).any():
        bad.append(f"{r.name}: ramp-up limit exceeded")
    if (pp - p > ru * (c - s) + U * d + tol * U).any():
        bad.append(f"{r.name}: ramp-down limit exceeded")
    return bad


# ---- small systems -----------------------------------------------------

def one_plant_system(demand, flex: FlexParams, *, peaker_vom: float = 60.0, wind=None,
                     nse_penalty: float = 500.0, plant_kwargs=None) -> SystemSpec:
    """The study plant, an expensive flexible peaker and optionally wind."""
    T = len(demand)
    res = [ccs_plant(existing_cap=500.0, unit_size=500.0, flex=flex, **(plant_kwargs or {})),
           ResourceSpec("peaker", "thermal-simple", existing_cap=600.0, vom=peaker_vom)]
    profiles = {}
    if wind is not None:
        res.append(ResourceSpec("wind", "vre", existing_cap=600.0))
        profiles["wind"] = np.asarray(wind, float)
    return SystemSpec(T, np.asarray(demand, float), tuple(res), profiles, nse_penalty=nse_penalty)


def dispatch_problem(spec: SystemSpec, pol: PolicyEnv) -> Problem:
    caps = {r.name: r.existing_cap for r in spec.resources}
    return build_model(spec, pol, mode=BuildMode.dispatch(caps))


def random_uc_instance(rng: np.random.Generator):
    """Single-plant commitment instance with at most 12 integer columns."""
    T = int(rng.integers(2, 5))
    flex = FlexParams(
        min_load=float(rng.uniform(0.2, 1.0)),
        ramp_rate=float(rng.uniform(0.2, 1.0)),
        min_up=int(rng.integers(1, T + 1)),
        min_down=int(rng.integers(1, T + 1)),
        startup_cost=float(rng.uniform(0.0, 300.0)),
    )
    plant = ccs_plant(existing_cap=500.0, unit_size=500.0, flex=flex)
    peaker = ResourceSpec("peaker", "thermal-simple", existing_cap=400.0, vom=float(rng.uniform(20, 80)))
    wind = ResourceSpec("wind", "vre", existing_cap=600.0)
    spec = SystemSpec(T, rng.uniform(100, 800, T), (plant, peaker, wind), {"wind": rng.uniform(0, 1, T)},
                      nse_penalty=500.0)
    pol = PolicyEnv(carbon_tax=float(rng.choice([0.0, 50.0, 200.0])))
    return spec, pol, dispatch_problem(spec, pol)
