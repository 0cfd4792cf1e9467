"""Synthetic single-region test system with the ten bundled technologies.

Demand follows a daily double hump with a weekly dip; wind is a smoothed
random walk; solar is a clipped sine with random cloud cover.  Everything is
seeded so the same call always yields the same arrays, and the bundled CSV
copies under ``data/`` were written from :func:`toy_system` with
:func:`ccsflex.io.write_inputs`.
"""
from __future__ import annotations

import math
import numpy as np

from .domain import (
    CCS_HEAT_RATE,
    DEFAULT_GAS_PRICE,
    GAS_EMISSION_FACTOR,
    HOURS_PER_YEAR,
    INFLEXIBLE,
    FlexParams,
    ResourceSpec,
    SystemSpec,
    ccs_plant,
)

GAS = dict(fuel_price=DEFAULT_GAS_PRICE, emission_factor=GAS_EMISSION_FACTOR)

# flexible combined cycle without capture; used when ngcc is unit-committed
NGCC_FLEX = FlexParams(min_load=0.30, ramp_rate=1.0, min_up=4, min_down=4, startup_cost=106.0)


def toy_resources(uc_ngcc: bool = False) -> tuple[ResourceSpec, ...]:
    ngcc = dict(name="ngcc", existing_cap=1000.0, can_expand=True, can_retire=True,
                capex_power=920.0, fom_power=28.0, vom=2.0, heat_rate=6.4, tech="ngcc", **GAS)
    if uc_ngcc:
        ngcc.update(resource_class="thermal-uc", unit_size=250.0, flex=NGCC_FLEX)
    else:
        ngcc.update(resource_class="thermal-simple")
    return (
        ccs_plant(existing_cap=0.0, can_expand=True, can_retire=True),
        ResourceSpec(**ngcc),
        ResourceSpec("ngct", "thermal-simple", existing_cap=300.0, can_expand=True, can_retire=True,
                     capex_power=793.0, fom_power=21.0, vom=5.0, heat_rate=9.7, tech="ngct", **GAS),
        ResourceSpec("battery", "storage", can_expand=True, can_retire=True, capex_power=159.0,
                     capex_energy=114.0, fom_power=6.0, fom_energy=5.0, itc_fraction=0.3,
                     lifetime_years=15.0, eff_charge=0.92, eff_discharge=0.92,
                     storage_duration_max=8.0, tech="battery"),
        ResourceSpec("nuclear", "firm", existing_cap=400.0, can_expand=True, can_retire=True,
                     capex_power=4388.0, fom_power=146.0, vom=3.0, heat_rate=10.4, fuel_price=0.7,
                     ces_qualifying=True, itc_fraction=0.3, tech="nuclear"),
        ResourceSpec("wind", "vre", existing_cap=800.0, can_expand=True, can_retire=True,
                     capex_power=1053.0, fom_power=39.0, ces_qualifying=True, tech="wind"),
        ResourceSpec("solar", "vre", existing_cap=400.0, can_expand=True, can_retire=True,
                     capex_power=845.0, fom_power=16.0, ces_qualifying=True, itc_fraction=0.3,
                     tech="solar"),
        ResourceSpec("offshore_wind", "vre", can_expand=True, can_retire=True, capex_power=1722.0,
                     fom_power=89.0, ces_qualifying=True, tech="offshore_wind"),
        ResourceSpec("h2ct", "thermal-simple", can_expand=True, can_retire=True, capex_power=793.0,
                     fom_power=21.0, vom=5.0, heat_rate=9.7, fuel_price=15.0, ces_qualifying=True,
                     tech="h2ct"),
        ResourceSpec("ng_steam", "thermal-simple", existing_cap=400.0, can_retire=True,
                     fom_power=30.0, vom=4.0, heat_rate=10.5, tech="ng_steam", **GAS),
    )


def toy_traces(hours: int, seed: int = 2035) -> dict[str, np.ndarray]:
    """Demand (MW) and availability traces for the toy system."""
    rng = np.random.default_rng(seed)
    h = np.arange(hours)
    hod = h % 24
    day = h // 24
    daily = 0.75 + 0.12 * np.sin(2 * np.pi * (hod - 9) / 24) + 0.10 * np.exp(-((hod - 17) ** 2) / 8.0)
    weekly = np.where(day % 7 >= 5, 0.92, 1.0)
    demand = 3000.0 * daily * weekly * (1 + 0.02 * rng.standard_normal(hours))

    def smooth_walk(mean, vol, corr):
        z = np.empty(hours)
        level = 0.0
        for k in range(hours):
            level = corr * level + vol * rng.standard_normal()
            z[k] = level
        return np.clip(mean + z, 0.0, 1.0)

    wind = smooth_walk(0.30, 0.08, 0.93)
    offshore = np.clip(0.6 * smooth_walk(0.40, 0.07, 0.95) + 0.4 * wind, 0.0, 1.0)
    clouds = np.repeat(rng.uniform(0.55, 1.0, size=math.ceil(hours / 24)), 24)[:hours]
    solar = np.clip(np.sin(np.pi * (hod - 6) / 13), 0.0, None) * clouds * 0.9
    return {
        "demand": np.round(demand, 1),
        "wind": np.round(wind, 4),
        "solar": np.round(solar, 4),
        "offshore_wind": np.round(offshore, 4),
    }


def toy_system(hours: int = 48, seed: int = 2035, uc_ngcc: bool | None = None) -> SystemSpec:
    """The toy planning system; ``ngcc`` is unit-committed from one week on."""
    if uc_ngcc is None:
        uc_ngcc = hours >= 168
    tr = toy_traces(hours, seed)
    return SystemSpec(
        horizon_hours=hours,
        demand=tr["demand"],
        resources=toy_resources(uc_ngcc),
        vre_profiles={k: tr[k] for k in ("wind", "solar", "offshore_wind")},
        hour_weight=HOURS_PER_YEAR / hours,
    )


__all__ = ["toy_resources", "toy_traces", "toy_system", "NGCC_FLEX"]
