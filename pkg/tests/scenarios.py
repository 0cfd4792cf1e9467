"""Constructed week-long systems for the cycling and superadditivity checks.

Both are one-plant systems: the study plant competes with an emitting gas
peaker, wind and solar.  All traces are closed-form so the recipe is
fully reproducible without a random generator.

``volatile_week``
    Wind exceeds demand for 12 hours out of every 15, so under a carbon tax
    the price flips between zero and the peaker's taxed cost.  Riding out
    the surplus at minimum load costs more than a restart only when the
    plant may stop and start again within one front.

``subsidised_week``
    Small renewable fleet and a demand trough every night that dips below
    the inflexible minimum load but not the flexible one.  With a capture
    credit the plant is the cheapest dispatchable source and wants to run.
"""
from __future__ import annotations

import numpy as np

from ccsflex.domain import GAS_EMISSION_FACTOR, PolicyEnv, ResourceSpec, SystemSpec, ccs_plant
from ccsflex.formulation import BuildMode

HOURS = 168
GAS = dict(fuel_price=2.8, emission_factor=GAS_EMISSION_FACTOR)

VOLATILE_POLICY = PolicyEnv(carbon_tax=200.0, co2_transport_storage_cost=10.0)
SUBSIDY_POLICY = PolicyEnv(capture_credit=85.0, co2_transport_storage_cost=10.0)


def _hod(T=HOURS):
    return np.arange(T) % 24


def _peaker(cap):
    return ResourceSpec("peaker", "thermal-simple", existing_cap=cap, vom=5.0, heat_rate=9.7, **GAS)


def volatile_week(flex) -> SystemSpec:
    # weather fronts every 15 h: 12 h of wind surplus, then 3 h near calm
    t = np.arange(HOURS)
    wind = np.where(t % 15 < 12, 1.0, 0.05)
    res = (
        ccs_plant(existing_cap=500.0, unit_size=500.0, flex=flex),
        _peaker(1500.0),
        ResourceSpec("wind", "vre", existing_cap=800.0),
    )
    return SystemSpec(HOURS, np.full(HOURS, 700.0), res, {"wind": wind}, nse_penalty=9000.0)


def subsidised_week(flex) -> SystemSpec:
    hod = _hod()
    demand = 520.0 + 130.0 * np.cos(2 * np.pi * (hod - 15) / 24) - np.where((hod >= 1) & (hod <= 4), 210.0, 0.0)
    wind = 0.30 + 0.05 * np.sin(2 * np.pi * np.arange(HOURS) / 50.0)
    res = (
        ccs_plant(existing_cap=500.0, unit_size=500.0, flex=flex),
        _peaker(800.0),
        ResourceSpec("wind", "vre", existing_cap=200.0),
    )
    return SystemSpec(HOURS, np.round(demand, 3), res, {"wind": np.round(wind, 4)}, nse_penalty=9000.0)


def fixed_caps(spec: SystemSpec) -> BuildMode:
    return BuildMode.dispatch({r.name: r.existing_cap for r in spec.resources})
