"""Input types for the planning problem and the closed-form cost arithmetic.

Everything here is immutable and side-effect free.  Validation never raises:
:func:`validate_system` collects every problem it finds so a caller can show
all of them at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Optional, Sequence

import numpy as np

RESOURCE_CLASSES = ("thermal-uc", "thermal-simple", "vre", "storage", "firm")

HOURS_PER_YEAR = 8760.0

# CCS plant parameters that reproduce the $30 -> $5/MWh arithmetic.
CCS_HEAT_RATE = 7.124  # MMBtu/MWh
CCS_CAPTURE_RATE = 0.90
GAS_EMISSION_FACTOR = 0.05306  # tCO2/MMBtu
DEFAULT_CO2_TS_COST = 10.0  # $/tCO2 captured
DEFAULT_GAS_PRICE = 2.8  # $/MMBtu
DEFAULT_STARTUP_FUEL = 2.0  # MMBtu/MW per start
DEFAULT_NSE_PENALTY = 9000.0  # $/MWh
DEFAULT_WACC = 0.065


@dataclass(frozen=True)
class FlexParams:
    """Operating-flexibility levers of a unit-committed resource.

    ``ramp_rate`` values above 1 are clamped to 1: at hourly resolution any
    unit that can sweep its full range within the hour is equally flexible.
    """

    min_load: float
    ramp_rate: float
    min_up: int
    min_down: int
    startup_cost: float  # $/MW per start
    startup_fuel: float = DEFAULT_STARTUP_FUEL  # MMBtu/MW per start

    def __post_init__(self):
        if self.ramp_rate > 1.0:
            object.__setattr__(self, "ramp_rate", 1.0)


FLEXIBLE = FlexParams(min_load=0.30, ramp_rate=1.00, min_up=4, min_down=4, startup_cost=106.0)
INFLEXIBLE = FlexParams(min_load=0.70, ramp_rate=0.36, min_up=12, min_down=18, startup_cost=159.0)


@dataclass(frozen=True)
class ResourceSpec:
    name: str
    resource_class: str
    existing_cap: float = 0.0  # MW
    can_expand: bool = False
    can_retire: bool = False
    unit_size: float = 0.0  # MW, thermal-uc only
    max_cap: Optional[float] = None  # MW build ceiling for expandable resources
    capex_power: float = 0.0  # $/kW
    capex_energy: float = 0.0  # $/kWh, storage only
    fom_power: float = 0.0  # $/kW-yr
    fom_energy: float = 0.0  # $/kWh-yr, storage only
    vom: float = 0.0  # $/MWh
    heat_rate: float = 0.0  # MMBtu/MWh
    fuel_price: float = 0.0  # $/MMBtu
    emission_factor: float = 0.0  # tCO2/MMBtu
    capture_rate: float = 0.0
    ces_qualifying: bool = False
    ptc: float = 0.0  # $/MWh
    itc_fraction: float = 0.0
    lifetime_years: float = 30.0
    existing_energy: float = 0.0  # MWh, storage only
    eff_charge: Optional[float] = None
    eff_discharge: Optional[float] = None
    storage_duration_max: Optional[float] = None  # hours
    flex: Optional[FlexParams] = None
    tech: str = ""

    @property
    def is_uc(self) -> bool:
        return self.resource_class == "thermal-uc"

    @property
    def is_storage(self) -> bool:
        return self.resource_class == "storage"

    @property
    def is_vre(self) -> bool:
        return self.resource_class == "vre"


@dataclass(frozen=True)
class PolicyEnv:
    carbon_tax: float = 0.0  # $/tCO2 emitted
    ces_fraction: float = 0.0
    capture_credit: float = 0.0  # $/tCO2 captured
    co2_transport_storage_cost: float = 0.0  # $/tCO2 captured
    nuclear_no_retire: bool = False
    ces_basis: str = "demand"  # or "generation"
    credit_startup_capture: bool = True

    def label(self) -> str:
        parts = []
        if self.carbon_tax:
            parts.append(f"tax{self.carbon_tax:g}")
        if self.ces_fraction:
            parts.append(f"ces{round(self.ces_fraction * 100):d}")
        if self.capture_credit:
            parts.append(f"credit{self.capture_credit:g}")
        return "+".join(parts) or "nopolicy"


@dataclass(frozen=True)
class FinanceParams:
    wacc: float = DEFAULT_WACC
    lifetime_overrides: Mapping[str, float] = field(default_factory=dict)

    def lifetime(self, r: ResourceSpec) -> float:
        return float(self.lifetime_overrides.get(r.name, r.lifetime_years))


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A single-region planning problem over ``horizon_hours`` hours.

    ``hour_weight`` multiplies every hourly cost so a sampled horizon can be
    scaled to an annual figure (``8760 / T`` for that purpose); the default
    of 1 treats the horizon itself as the accounting period.
    """

    horizon_hours: int
    demand: np.ndarray
    resources: tuple
    vre_profiles: Mapping[str, np.ndarray] = field(default_factory=dict)
    nse_penalty: float = DEFAULT_NSE_PENALTY
    hour_weight: float = 1.0

    def __post_init__(self):
        demand = np.array(self.demand, dtype=float)
        demand.setflags(write=False)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "resources", tuple(self.resources))
        profiles = {}
        for name, prof in dict(self.vre_profiles).items():
            arr = np.array(prof, dtype=float)
            arr.setflags(write=False)
            profiles[name] = arr
        object.__setattr__(self, "vre_profiles", profiles)

    def resource(self, name: str) -> ResourceSpec:
        for r in self.resources:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self) -> list[str]:
        return [r.name for r in self.resources]

    def with_resource(self, res: ResourceSpec) -> "SystemSpec":
        """Return a copy with ``res`` replacing the same-named resource (or appended)."""
        out, hit = [], False
        for r in self.resources:
            if r.name == res.name:
                out.append(res)
                hit = True
            else:
                out.append(r)
        if not hit:
            out.append(res)
        return replace(self, resources=tuple(out))

    def without_resource(self, name: str) -> "SystemSpec":
        profiles = {k: v for k, v in self.vre_profiles.items() if k != name}
        return replace(
            self,
            resources=tuple(r for r in self.resources if r.name != name),
            vre_profiles=profiles,
        )


@dataclass(frozen=True)
class Violation:
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __bool__(self):
        return self.ok


def _finite_nonneg(x) -> bool:
    return x is not None and not math.isnan(x) and x >= 0


def validate_flex(flex: FlexParams, horizon: Optional[int] = None, where: str = "flex") -> list[Violation]:
    out = []
    if not (0 < flex.min_load <= 1):
        out.append(Violation(f"{where}.min_load", f"must be in (0, 1], got {flex.min_load}"))
    if not (0 < flex.ramp_rate <= 1):
        out.append(Violation(f"{where}.ramp_rate", f"must be in (0, 1], got {flex.ramp_rate}"))
    for attr in ("min_up", "min_down"):
        v = getattr(flex, attr)
        if int(v) != v or v < 1:
            out.append(Violation(f"{where}.{attr}", f"must be an integer >= 1, got {v}"))
        elif horizon is not None and v > horizon:
            out.append(Violation(f"{where}.{attr}", f"{v} h exceeds the horizon of {horizon} h"))
    for attr in ("startup_cost", "startup_fuel"):
        if not _finite_nonneg(getattr(flex, attr)):
            out.append(Violation(f"{where}.{attr}", "must be >= 0"))
    return out


_COST_FIELDS = (
    "existing_cap", "capex_power", "capex_energy", "fom_power", "fom_energy", "vom",
    "heat_rate", "fuel_price", "emission_factor", "ptc", "existing_energy",
)


def validate_resource(r: ResourceSpec, horizon: Optional[int] = None) -> list[Violation]:
    where = f"resource[{r.name}]"
    out = []
    if r.resource_class not in RESOURCE_CLASSES:
        out.append(Violation(f"{where}.resource_class", f"unknown class {r.resource_class!r}"))
    if not (0 <= r.capture_rate <= 1):
        out.append(Violation(f"{where}.capture_rate", f"must be in [0, 1], got {r.capture_rate}"))
    elif r.capture_rate > 0 and r.resource_class not in ("thermal-uc", "thermal-simple"):
        out.append(Violation(f"{where}.capture_rate", "capture is only allowed on thermal resources"))
    for attr in _COST_FIELDS:
        if not _finite_nonneg(getattr(r, attr)):
            out.append(Violation(f"{where}.{attr}", f"must be >= 0, got {getattr(r, attr)}"))
    if not (0 <= r.itc_fraction <= 1):
        out.append(Violation(f"{where}.itc_fraction", "must be in [0, 1]"))
    if r.lifetime_years < 1:
        out.append(Violation(f"{where}.lifetime_years", "must be >= 1"))
    if r.max_cap is not None and r.max_cap < r.existing_cap:
        out.append(Violation(f"{where}.max_cap", "is below existing capacity"))
    if r.is_uc:
        if not r.unit_size > 0:
            out.append(Violation(f"{where}.unit_size", "thermal-uc needs unit_size > 0"))
        if r.flex is None:
            out.append(Violation(f"{where}.flex", "thermal-uc needs flexibility parameters"))
        else:
            out.extend(validate_flex(r.flex, horizon, f"{where}.flex"))
    elif r.flex is not None:
        out.append(Violation(f"{where}.flex", "only thermal-uc resources carry flexibility parameters"))
    storage_fields = (r.eff_charge, r.eff_discharge)
    if r.is_storage:
        for attr in ("eff_charge", "eff_discharge"):
            v = getattr(r, attr)
            if v is None or not (0 < v <= 1):
                out.append(Violation(f"{where}.{attr}", "storage efficiency must be in (0, 1]"))
        if r.storage_duration_max is not None and r.storage_duration_max <= 0:
            out.append(Violation(f"{where}.storage_duration_max", "must be > 0"))
    else:
        if any(v is not None for v in storage_fields) or r.storage_duration_max is not None:
            out.append(Violation(f"{where}", "storage fields set on a non-storage resource"))
        if r.capex_energy or r.fom_energy or r.existing_energy:
            out.append(Violation(f"{where}", "energy-capacity costs set on a non-storage resource"))
    return out


def validate_system(spec: SystemSpec) -> ValidationReport:
    """Check every invariant of ``spec``; an empty report means well-formed."""
    out: list[Violation] = []
    T = spec.horizon_hours
    if int(T) != T or T < 1:
        out.append(Violation("horizon_hours", f"must be a positive integer, got {T}"))
    if len(spec.demand) != T:
        out.append(Violation("demand", f"length {len(spec.demand)} != horizon {T}"))
    if np.any(~np.isfinite(spec.demand)) or np.any(spec.demand < 0):
        out.append(Violation("demand", "values must be finite and >= 0"))
    if not spec.nse_penalty > 0:
        out.append(Violation("nse_penalty", "must be > 0"))
    if not spec.hour_weight > 0:
        out.append(Violation("hour_weight", "must be > 0"))
    seen = set()
    for r in spec.resources:
        if r.name in seen:
            out.append(Violation(f"resource[{r.name}]", "duplicate resource name"))
        seen.add(r.name)
        out.extend(validate_resource(r, T))
        if r.is_vre and r.name not in spec.vre_profiles:
            out.append(Violation(f"vre_profiles[{r.name}]", "vre resource has no availability profile"))
    by_name = {r.name: r for r in spec.resources}
    for name, prof in spec.vre_profiles.items():
        r = by_name.get(name)
        if r is None:
            out.append(Violation(f"vre_profiles[{name}]", "profile for an unknown resource"))
        elif not r.is_vre:
            out.append(Violation(f"vre_profiles[{name}]", "profile attached to a non-vre resource"))
        if len(prof) != T:
            out.append(Violation(f"vre_profiles[{name}]", f"length {len(prof)} != horizon {T}"))
        if np.any(~np.isfinite(prof)) or np.any((prof < 0) | (prof > 1)):
            out.append(Violation(f"vre_profiles[{name}]", "availability must lie in [0, 1]"))
    return ValidationReport(tuple(out))


def validate_policy(pol: PolicyEnv) -> list[Violation]:
    out = []
    for attr in ("carbon_tax", "capture_credit", "co2_transport_storage_cost"):
        if not _finite_nonneg(getattr(pol, attr)):
            out.append(Violation(f"policy.{attr}", "must be >= 0"))
    if not (0 <= pol.ces_fraction <= 1):
        out.append(Violation("policy.ces_fraction", "must be in [0, 1]"))
    if pol.ces_basis not in ("demand", "generation"):
        out.append(Violation("policy.ces_basis", f"unknown basis {pol.ces_basis!r}"))
    return out


def annualize_capex(capex: float, wacc: float, lifetime: float, itc_fraction: float = 0.0) -> float:
    """Capital recovery: ``capex * (1 - itc) * CRF(wacc, lifetime)``.

    Units follow ``capex`` per year ($/kW -> $/kW-yr).  ``wacc -> 0`` takes the
    straight-line limit ``capex / lifetime``.
    """
    if lifetime < 1:
        raise ValueError(f"lifetime must be >= 1 year, got {lifetime}")
    if wacc < 0:
        raise ValueError(f"wacc must be >= 0, got {wacc}")
    net = capex * (1.0 - itc_fraction)
    if net == 0:
        return 0.0
    if wacc < 1e-12:
        return net / lifetime
    return net * wacc / (1.0 - (1.0 + wacc) ** (-lifetime))


def emission_intensity(r: ResourceSpec) -> float:
    """Gross CO2 produced per MWh, before capture (t/MWh)."""
    return r.heat_rate * r.emission_factor


def capture_intensity(r: ResourceSpec) -> float:
    """Captured CO2 per MWh (t/MWh)."""
    return r.heat_rate * r.emission_factor * r.capture_rate


def emitted_intensity(r: ResourceSpec) -> float:
    return r.heat_rate * r.emission_factor * (1.0 - r.capture_rate)


def effective_marginal_cost(r: ResourceSpec, pol: PolicyEnv) -> float:
    """Variable cost of one more MWh under ``pol`` in $/MWh; can be negative."""
    return (
        r.fuel_price * r.heat_rate
        + r.vom
        + pol.carbon_tax * emitted_intensity(r)
        + (pol.co2_transport_storage_cost - pol.capture_credit) * capture_intensity(r)
        - r.ptc
    )


@dataclass(frozen=True)
class StartupCost:
    """Per-MW cost of one start, split the way profit statements report it."""

    fixed: float
    fuel: float
    carbon_tax: float
    transport_storage: float
    credit: float
    emitted_t: float  # tCO2 emitted per MW started
    captured_t: float  # tCO2 captured per MW started

    @property
    def total(self) -> float:
        return self.fixed + self.fuel + self.carbon_tax + self.transport_storage - self.credit


def startup_cost_per_mw(r: ResourceSpec, pol: PolicyEnv, flex: Optional[FlexParams] = None) -> StartupCost:
    flex = flex or r.flex
    if flex is None:
        return StartupCost(0, 0, 0, 0, 0, 0, 0)
    co2 = flex.startup_fuel * r.emission_factor
    if pol.credit_startup_capture:
        captured = co2 * r.capture_rate
    else:
        captured = 0.0
    emitted = co2 - captured
    return StartupCost(
        fixed=flex.startup_cost,
        fuel=flex.startup_fuel * r.fuel_price,
        carbon_tax=pol.carbon_tax * emitted,
        transport_storage=pol.co2_transport_storage_cost * captured,
        credit=pol.capture_credit * captured,
        emitted_t=emitted,
        captured_t=captured,
    )


def ccs_plant(
    name: str = "ccs",
    existing_cap: float = 500.0,
    unit_size: float = 500.0,
    flex: FlexParams = INFLEXIBLE,
    **overrides,
) -> ResourceSpec:
    """The 500 MW gas combined cycle with capture used as the study plant."""
    base = dict(
        name=name,
        resource_class="thermal-uc",
        existing_cap=existing_cap,
        unit_size=unit_size,
        capex_power=2310.0,
        fom_power=67.0,
        vom=10.0,
        heat_rate=CCS_HEAT_RATE,
        fuel_price=DEFAULT_GAS_PRICE,
        emission_factor=GAS_EMISSION_FACTOR,
        capture_rate=CCS_CAPTURE_RATE,
        ces_qualifying=True,
        lifetime_years=30.0,
        flex=flex,
        tech="ngcc_ccs",
    )
    base.update(overrides)
    return ResourceSpec(**base)


def resource_field_names() -> list[str]:
    return [f.name for f in fields(ResourceSpec)]


def as_array(values: Sequence[float]) -> np.ndarray:
    return np.asarray(values, dtype=float)
