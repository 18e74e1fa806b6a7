import numpy as np
import pytest

from helpers import instance, random_toy
from touopt.bes import BatteryDispatch, BatterySpec
from touopt.billing import (
    BillBreakdown,
    InvalidDispatch,
    OracleTooLarge,
    bill_of_dispatch,
    bill_of_net_demand,
    brute_force_optimal,
    net_demand,
)
from touopt.lp_model import solve_instance


def test_constant_demand_energy_charge():
    inst = instance(np.full(4, 10.0), er=0.10, step_minutes=15)
    bill = bill_of_dispatch(inst, BatteryDispatch.idle(inst.grid, inst.spec))
    assert np.isclose(bill.energy_charge, 1.00) and np.isclose(bill.total, 1.00)
    assert bill.nem_revenue == 0 and bill.demand_charge == 0


def test_export_revenue():
    inst = instance(np.zeros(4), np.full(4, 5.0), er=0.10, nsr=0.075, step_minutes=15)
    bill = bill_of_net_demand(inst, net_demand(inst, BatteryDispatch.idle(inst.grid, inst.spec)))
    assert np.isclose(bill.nem_revenue, -0.375)
    assert bill.energy_charge == 0


def test_max_demand_charge():
    inst = instance([5, 12, 0], [0, 0, 3], dr_max=20.0, er=0.0, nsr=0.0)
    assert np.isclose(bill_of_net_demand(inst, [5, 12, -3]).max_demand_charge, 240)


def test_demand_charges_floor_at_zero():
    mask = np.array([True, True, False])
    inst = instance([0, 0, 1], [2, 2, 0], dr_max=20.0, periods=[("peak", mask, 7.0)])
    bill = bill_of_net_demand(inst, [-2, -2, 1])
    assert bill.tou_demand_charges == {"peak": 0.0}
    assert bill.max_demand_charge == 20.0


def test_total_is_exact_sum():
    b = BillBreakdown(1.1, {"a": 2.2, "b": 3.3}, 4.4, -0.5)
    assert b.total == 1.1 + 2.2 + 3.3 + 4.4 + (-0.5)
    assert b.demand_charge == 1.1 + 2.2 + 3.3
    assert np.isclose(b.scaled(2).total, 2 * b.total)


def test_invalid_dispatch_is_rejected():
    inst = instance(np.full(2, 10.0), spec=BatterySpec.with_duration(5, 2))
    d = BatteryDispatch.from_power(inst.grid, inst.spec, [5, 0], [0, 0])
    with pytest.raises(InvalidDispatch, match="terminal_soc"):
        bill_of_dispatch(inst, d)


def test_linear_without_demand_charges():
    rng = np.random.default_rng(0)
    inst = instance(np.full(6, 1.0), er=rng.uniform(0.1, 0.3, 6))
    a, b = rng.normal(0, 10, 6), rng.normal(0, 10, 6)
    lhs = bill_of_net_demand(inst, 2 * a + 3 * b).total
    rhs = 2 * bill_of_net_demand(inst, a).total + 3 * bill_of_net_demand(inst, b).total
    assert np.isclose(lhs, rhs)


def test_oracle_zero_energy_battery_is_idle():
    inst = instance([30, 50, 40, 20], [10, 60, 5, 0], BatterySpec(0, 20), er=0.2, nsr=0.15, dr_max=3.0)
    res = brute_force_optimal(inst, 5)
    assert not res.dispatch.charge_kw.any() and not res.dispatch.discharge_kw.any()
    idle = bill_of_net_demand(inst, inst.base_kw - inst.pv_kw).total
    assert np.isclose(res.total, idle)


def test_oracle_all_rates_zero():
    inst = instance([30, 50, 40, 20], spec=BatterySpec.with_duration(10, 2), er=0.0, nsr=0.0)
    assert brute_force_optimal(inst, 5).total == 0.0


def test_oracle_six_intervals_converges():
    inst = random_toy(np.random.default_rng(11), 6)
    lp = solve_instance(inst).objective_value
    totals = [brute_force_optimal(inst, n).total for n in (5, 9, 17)]
    assert totals[0] >= totals[1] >= totals[2] >= lp - 1e-6
    assert (totals[2] - lp) / abs(lp) <= 0.01


def test_oracle_enumeration_and_dp_agree():
    inst = random_toy(np.random.default_rng(12), 6)
    e = brute_force_optimal(inst, 5, mode="enumerate")
    d = brute_force_optimal(inst, 5, mode="dp")
    assert e.mode == "enumerate" and d.mode == "dp"
    assert np.isclose(e.total, d.total, rtol=1e-12)
    assert d.states_explored <= e.states_explored


def test_oracle_dispatch_never_overlaps():
    inst = random_toy(np.random.default_rng(13), 8)
    d = brute_force_optimal(inst, 9).dispatch
    assert not ((d.charge_kw > 0) & (d.discharge_kw > 0)).any()


def test_oracle_guards():
    with pytest.raises(OracleTooLarge, match="smaller instance"):
        brute_force_optimal(instance(np.full(13, 10.0), spec=BatterySpec.with_duration(5, 2)), 5, mode="enumerate")
    with pytest.raises(OracleTooLarge, match="smaller instance"):
        brute_force_optimal(instance(np.full(49, 10.0), spec=BatterySpec.with_duration(5, 2)), 5)
    with pytest.raises(ValueError):
        brute_force_optimal(instance(np.full(4, 10.0)), 1)
    with pytest.raises(ValueError):
        brute_force_optimal(instance(np.full(4, 10.0)), 5, mode="magic")
