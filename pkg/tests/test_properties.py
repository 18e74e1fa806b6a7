"""Randomized properties of the billing arithmetic and the monthly LP."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from helpers import instance, random_feasible_dispatch, random_toy
from touopt.bes import BatterySpec, soc_trajectory, validate_dispatch
from touopt.billing import bill_of_dispatch
from touopt.lp_model import MonthlyInstance, solve_instance
from touopt.profiles import SiteProfile, resample

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2**32 - 1)
counts = st.integers(4, 24)


def with_pv(inst: MonthlyInstance, factor: float) -> MonthlyInstance:
    site = SiteProfile(inst.grid, inst.base_kw, inst.pv_kw * factor)
    return MonthlyInstance(inst.grid, site, inst.spec, inst.er, inst.nsr, inst.dr_max, inst.demand_periods)


def with_spec(inst: MonthlyInstance, spec: BatterySpec) -> MonthlyInstance:
    return MonthlyInstance(inst.grid, inst.site, spec, inst.er, inst.nsr, inst.dr_max, inst.demand_periods)


@SETTINGS
@given(seeds, counts)
def test_lp_dispatch_is_valid_and_cross_checked(seed, count):
    inst = random_toy(np.random.default_rng(seed), count)
    sol = solve_instance(inst)
    assert sol.ok
    assert validate_dispatch(inst.spec, sol.dispatch, inst.base_kw, 1e-6) == []
    assert abs(sol.bill.total - sol.objective_value) <= 1e-6 * max(1.0, abs(sol.objective_value))


@SETTINGS
@given(seeds, counts)
def test_feasible_dispatches_never_beat_the_lp(seed, count):
    rng = np.random.default_rng(seed)
    inst = random_toy(rng, count)
    opt = solve_instance(inst).objective_value
    for _ in range(10):
        bill = bill_of_dispatch(inst, random_feasible_dispatch(inst, rng)).total
        assert bill >= opt - 1e-6 * (1 + abs(opt))


@SETTINGS
@given(seeds, counts, st.floats(0.1, 10.0))
def test_rate_homogeneity(seed, count, alpha):
    inst = random_toy(np.random.default_rng(seed), count)
    a = solve_instance(inst).objective_value
    b = solve_instance(inst.scaled(alpha)).objective_value
    assert abs(b - alpha * a) <= 1e-8 * max(1.0, abs(alpha * a))


@SETTINGS
@given(seeds, counts)
def test_more_pv_never_costs_more(seed, count):
    inst = random_toy(np.random.default_rng(seed), count)
    bills = [solve_instance(with_pv(inst, f)).objective_value for f in (0.0, 0.5, 1.0, 2.0)]
    assert all(b <= a + 1e-6 * (1 + abs(a)) for a, b in zip(bills, bills[1:]))


@SETTINGS
@given(seeds, counts, st.sampled_from([1.0, 2.0, 4.0]))
def test_bigger_battery_never_costs_more(seed, count, hours):
    inst = random_toy(np.random.default_rng(seed), count)
    bills = [solve_instance(with_spec(inst, BatterySpec.with_duration(p, hours))).objective_value for p in (0, 10, 20, 40)]
    assert all(b <= a + 1e-6 * (1 + abs(a)) for a, b in zip(bills, bills[1:]))


@SETTINGS
@given(st.lists(st.floats(0, 500), min_size=1, max_size=8), st.sampled_from([(15, 60), (30, 60), (15, 30)]))
def test_resample_round_trip(values, steps):
    fine, coarse = steps
    up = resample(values, coarse, fine)
    assert np.allclose(resample(up, fine, coarse), values)
    assert np.isclose(up.sum() * fine, np.sum(values) * coarse)


@SETTINGS
@given(st.lists(st.tuples(st.floats(0, 50), st.floats(0, 50)), min_size=1, max_size=10), st.floats(0.5, 1.0))
def test_soc_trajectory_matches_energy_balance(powers, eta):
    cha = np.array([p[0] for p in powers])
    dis = np.array([p[1] for p in powers])
    soc = soc_trajectory(100.0, cha, dis, eta, 0.25)
    assert np.isclose(soc[-1], 100.0 + 0.25 * (eta * cha.sum() - dis.sum()))


@SETTINGS
@given(seeds)
def test_small_base_load_limits_discharge(seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, 5, 8)
    inst = instance(base, spec=BatterySpec.with_duration(20, 2), er=rng.uniform(0.1, 0.4, 8), nsr=0.05, dr_max=1.0)
    sol = solve_instance(inst)
    assert np.all(sol.dispatch.discharge_kw <= base + sol.dispatch.charge_kw + 1e-6)
    d = random_feasible_dispatch(inst, rng)
    assert validate_dispatch(inst.spec, d, base, 1e-6) == []
