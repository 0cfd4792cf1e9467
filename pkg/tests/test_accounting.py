from dataclasses import fields, replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccsflex.accounting import (
    ALL_TOGETHER,
    SUM_OF_SINGLES,
    AccountingError,
    CaseResult,
    compute_metrics,
    delta_table,
    energy_residuals,
    histogram,
    hourly_prices,
    operating_profit,
    spells,
    total_system_cost,
)
from ccsflex.datasets import toy_system
from ccsflex.domain import FinanceParams, FlexParams, PolicyEnv, ResourceSpec, SystemSpec, effective_marginal_cost
from ccsflex.formulation import BuildMode, build_model
from ccsflex.solver import Solution, fix_and_price, solve

from helpers import dispatch_problem, one_plant_system, physical_violations, random_uc_instance

EASY = FlexParams(0.3, 1.0, 1, 1, 0.0)


# ---- spells and metrics ----------------------------------------------------

def test_circular_wrap_joins_spells():
    assert spells([1, 1, 0, 0, 1, 1]) == ([4], [2])


def test_spell_edge_cases():
    assert spells([1] * 5) == ([5], [])
    assert spells([0] * 5) == ([], [5])
    assert spells([]) == ([], [])
    assert spells([1, 0, 1, 0]) == ([1, 1], [1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=60))
def test_spells_cover_the_horizon(on):
    ons, offs = spells(on)
    assert sum(ons) + sum(offs) == len(on)
    assert sum(ons) == sum(on)
    # on/off spells alternate around the circle
    if ons and offs:
        assert len(ons) == len(offs)
    starts = sum(1 for t in range(len(on)) if on[t] and not on[t - 1])
    assert starts == (len(ons) if offs else 0)


def test_histogram_counts():
    assert histogram([3, 1, 3, 2, 3]) == [(1, 1), (2, 1), (3, 3)]
    assert histogram([]) == []


def _solved(spec, pol=PolicyEnv()):
    p = dispatch_problem(spec, pol)
    sol = solve(p)
    assert sol.status == "optimal"
    return p, sol


def test_full_output_metrics():
    spec = one_plant_system([500.0] * 6, EASY)
    p, sol = _solved(spec)
    m = compute_metrics(spec, p, sol)["ccs"]
    assert m.capacity_factor == pytest.approx(1.0)
    assert m.startups == 0
    assert m.up_spells == ((6, 1),) and m.down_spells == ()


def test_commit_pattern_with_circular_wrap():
    spec = one_plant_system([400.0, 400.0, 0.0, 0.0, 400.0, 400.0], EASY)
    p, sol = _solved(spec)
    m = compute_metrics(spec, p, sol)["ccs"]
    assert m.startups == 1
    assert m.up_spells == ((4, 1),)
    assert m.down_spells == ((2, 1),)
    assert m.capacity_factor == pytest.approx(1600.0 / 3000.0)


def test_capacity_factor_bounded_and_startups_match_start_columns():
    for seed in range(20):
        spec, pol, p = random_uc_instance(np.random.default_rng(seed))
        sol = solve(p)
        m = compute_metrics(spec, p, sol, pol)
        for r in spec.resources:
            assert 0.0 <= m[r.name].capacity_factor <= 1.0
        starts = np.round(sol.x[[p.index[("start", "ccs", t)] for t in range(1, spec.horizon_hours + 1)]])
        assert m["ccs"].startups == int(starts.sum())
        ups = sum(k * n for k, n in m["ccs"].up_spells)
        downs = sum(k * n for k, n in m["ccs"].down_spells)
        assert ups + downs == spec.horizon_hours


def test_metrics_need_an_optimal_solution():
    spec = one_plant_system([100.0], EASY)
    p = dispatch_problem(spec, PolicyEnv())
    with pytest.raises(AccountingError):
        compute_metrics(spec, p, Solution("infeasible", np.nan, None))


# ---- profit ----------------------------------------------------------------

def test_one_hour_profit_example():
    # VOM chosen so the effective marginal cost is exactly 29.9 $/MWh
    spec = one_plant_system([500.0], EASY, plant_kwargs={"vom": 29.9 - 2.8 * 7.124})
    p, sol = _solved(spec)
    st_ = operating_profit(spec, PolicyEnv(), p, sol, [30.0], "ccs")
    assert st_.startup_cost == 0.0
    assert st_.operating_profit == pytest.approx(50.0, abs=1e-9)


def test_never_committed_plant_has_zero_profit_fields():
    spec = one_plant_system([300.0] * 4, EASY, peaker_vom=1.0)
    p, sol = _solved(spec)
    st_ = operating_profit(spec, PolicyEnv(carbon_tax=50.0), p, sol, np.full(4, 40.0), "ccs")
    for f in fields(st_):
        if f.name != "fixed_om":
            assert getattr(st_, f.name) == 0.0
    assert st_.operating_profit == 0.0
    assert compute_metrics(spec, p, sol)["ccs"].capacity_factor == 0.0


def test_profit_is_revenue_minus_cost():
    spec, pol, p = random_uc_instance(np.random.default_rng(11))
    sol = solve(p)
    st_ = operating_profit(spec, pol, p, sol, np.linspace(10, 90, spec.horizon_hours), "ccs")
    parts = (st_.energy_revenue + st_.credit_revenue + st_.ptc_revenue
             - st_.fuel_cost - st_.vom_cost - st_.carbon_tax_cost - st_.transport_storage_cost - st_.startup_cost)
    assert st_.operating_profit == parts


def test_price_vector_length_checked():
    spec = one_plant_system([500.0, 500.0], EASY)
    p, sol = _solved(spec)
    with pytest.raises(AccountingError):
        operating_profit(spec, PolicyEnv(), p, sol, [30.0], "ccs")


def test_prices_undo_the_hour_weight():
    spec = one_plant_system([300.0, 300.0], EASY)
    spec = SystemSpec(spec.horizon_hours, spec.demand, spec.resources, spec.vre_profiles,
                      nse_penalty=spec.nse_penalty, hour_weight=12.5)
    p, sol = _solved(spec)
    pi = hourly_prices(spec, p, fix_and_price(p, sol))
    np.testing.assert_allclose(pi, 2.8 * 7.124 + 10.0, atol=1e-6)


def test_prices_need_duals():
    spec = one_plant_system([300.0], EASY)
    p, sol = _solved(spec)
    with pytest.raises(AccountingError):
        hourly_prices(spec, p, Solution("optimal", sol.objective, sol.x))


def test_simple_generators_recover_their_costs():
    # robust to dual degeneracy: a dispatched price-taker never earns below its VOM
    spec = toy_system(48)
    caps = {r.name: r.existing_cap for r in spec.resources}
    caps["ccs"] = 500.0
    spec = spec.with_resource(replace(spec.resource("ccs"), existing_cap=500.0))
    pol = PolicyEnv(carbon_tax=200.0, co2_transport_storage_cost=10.0)
    p = build_model(spec, pol, mode=BuildMode.dispatch(caps))
    sol = solve(p)
    pi = hourly_prices(spec, p, fix_and_price(p, sol))
    for r in spec.resources:
        if r.resource_class != "thermal-simple":
            continue
        gen = sol.x[p.index.series("vP", r.name, spec.horizon_hours)]
        run = gen > 1e-6
        assert (pi[run] >= effective_marginal_cost(r, pol) - 1e-6).all()


# ---- system cost -------------------------------------------------------------

@pytest.mark.parametrize("pol", [PolicyEnv(carbon_tax=200.0, co2_transport_storage_cost=10.0),
                                 PolicyEnv(ces_fraction=0.9, capture_credit=85.0, co2_transport_storage_cost=10.0),
                                 PolicyEnv()])
def test_recomputed_cost_equals_objective_on_expansion(pol):
    spec = toy_system(24)
    p = build_model(spec, pol, FinanceParams(), BuildMode.expansion())
    sol = solve(p)
    tsc = total_system_cost(spec, pol, FinanceParams(), p, sol)
    assert tsc.total == pytest.approx(sol.objective, rel=1e-6)
    assert physical_violations(spec, p, sol.x) == []


def test_recomputed_cost_equals_objective_on_dispatch():
    for seed in range(20):
        spec, pol, p = random_uc_instance(np.random.default_rng(100 + seed))
        sol = solve(p)
        tsc = total_system_cost(spec, pol, FinanceParams(), p, sol)
        assert tsc.total == pytest.approx(sol.objective, rel=1e-6, abs=1e-6)


def test_zero_demand_costs_only_the_capacity_that_must_stay():
    T = 6
    res = (
        ResourceSpec("nuclear", "firm", existing_cap=400.0, can_retire=True, fom_power=146.0, vom=3.0,
                     tech="nuclear"),
        ResourceSpec("gas", "thermal-simple", existing_cap=300.0, can_retire=True, fom_power=20.0, vom=30.0),
        ResourceSpec("wind", "vre", existing_cap=200.0, can_retire=False, fom_power=39.0, can_expand=True,
                     capex_power=1053.0),
    )
    spec = SystemSpec(T, np.zeros(T), res, {"wind": np.full(T, 0.4)})
    pol = PolicyEnv(nuclear_no_retire=True)
    p = build_model(spec, pol, FinanceParams(), BuildMode.expansion())
    sol = solve(p)
    expected = 1000.0 * (146.0 * 400.0 + 39.0 * 200.0)
    assert sol.objective == pytest.approx(expected, rel=1e-9)
    tsc = total_system_cost(spec, pol, FinanceParams(), p, sol)
    assert tsc.total == pytest.approx(expected, rel=1e-9)
    assert tsc.fixed == pytest.approx(expected, rel=1e-9)


def test_itc_and_transfers_reconcile():
    spec = toy_system(24)
    pol = PolicyEnv(ces_fraction=0.8, capture_credit=85.0, co2_transport_storage_cost=10.0)
    p = build_model(spec, pol, FinanceParams(), BuildMode.expansion())
    tsc = total_system_cost(spec, pol, FinanceParams(), p, solve(p))
    assert tsc.without_transfers == pytest.approx(
        tsc.total - tsc.carbon_tax + tsc.capture_credit + tsc.ptc + tsc.itc)
    assert tsc.itc >= 0.0


# ---- conservation ------------------------------------------------------------

def test_energy_residuals_vanish_on_optimal_solutions():
    spec = toy_system(24)
    p = build_model(spec, PolicyEnv(carbon_tax=100.0), FinanceParams(), BuildMode.expansion())
    sol = solve(p)
    assert np.abs(energy_residuals(spec, p, sol.x)).max() <= 1e-6 * spec.demand.max()


# ---- deltas --------------------------------------------------------------

def test_deltas_against_baseline():
    base = CaseResult("s", frozenset(), profit=1.0, capacity=10.0, tsc=100.0)
    cases = [CaseResult("s", frozenset({"P1"}), 1.0, 10.0, 100.0),
             CaseResult("s", frozenset({"P2"}), 2.0, 12.0, 99.0),
             CaseResult("s", frozenset({"P1", "P2"}), 4.0, 15.0, 97.0)]
    rows = delta_table(base, cases, frozenset({"P1", "P2"}))
    assert [r.profit for r in rows[:3]] == [0.0, 1.0, 3.0]
    assert [r.tsc for r in rows[:3]] == [0.0, -1.0, -3.0]
    summary = {r.label: r for r in rows if r.synthetic}
    assert summary[SUM_OF_SINGLES].profit == 1.0
    assert summary[ALL_TOGETHER].profit == 3.0
    assert [r.label for r in rows[:3]] == ["P1", "P2", "P1+P2"]


def test_self_delta_is_zero():
    base = CaseResult("s", frozenset(), 5.0, 500.0, 7.0)
    row = delta_table(base, [CaseResult("s", frozenset({"P3"}), 5.0, 500.0, 7.0)])[0]
    assert (row.profit, row.capacity, row.tsc) == (0.0, 0.0, 0.0)


def test_deltas_refuse_mixed_scenarios():
    with pytest.raises(AccountingError):
        delta_table(CaseResult("a", frozenset()), [CaseResult("b", frozenset({"P1"}))])
