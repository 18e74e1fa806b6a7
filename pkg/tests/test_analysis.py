import csv

import numpy as np
import pytest

from helpers import example_site, flat_tariff, shipped_tariff
from touopt import analysis
from touopt.bes import BatterySpec, validate_dispatch
from touopt.billing import bill_of_net_demand
from touopt.lp_model import build_instance
from touopt.solver import SolverConfig

HIGHS = SolverConfig(backend="highs")


@pytest.fixture(scope="module")
def mep():
    return example_site("mep")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_zero_assets_equal_direct_bill(mep):
    cfg, site, unit = mep
    tariff = shipped_tariff("B19OpS")
    annual = analysis.annual_bill(site, tariff, BatterySpec.none(), 0.0, unit, HIGHS)
    assert len(annual.months) == 12
    for m in annual.months:
        inst = build_instance(site, tariff, BatterySpec.none(), 2019, m.month, 0.0, unit)
        direct = bill_of_net_demand(inst, inst.base_kw).total
        assert abs(m.bill.total - direct) <= 1e-9 * direct
    assert annual.total == sum(m.bill.total for m in annual.months)


def test_all_rates_zero(mep):
    cfg, site, unit = mep
    annual = analysis.annual_bill(site, flat_tariff(rate=0.0), cfg.battery, cfg.pv_capacity_kw, unit, HIGHS)
    assert annual.total == 0.0


def test_months_carry_valid_dispatch(mep):
    cfg, site, unit = mep
    annual = analysis.annual_bill(site, shipped_tariff("E19OpR"), cfg.battery, cfg.pv_capacity_kw, unit, HIGHS)
    for m in annual.months:
        assert validate_dispatch(cfg.battery, m.dispatch, m.base_kw, 1e-6) == []
        assert m.cycles >= 0


def test_bes_power_sweep_is_monotone(mep):
    cfg, site, unit = mep
    tariffs = [shipped_tariff(n) for n in ("E19TOU", "B19OpS")]
    res = analysis.sweep(site, tariffs, cfg.battery, analysis.BES_POWER_2H, [0, 125, 250], cfg.pv_capacity_kw, unit, HIGHS)
    for name, r in res.items():
        totals = r.annual_totals
        assert len(totals) == 3
        assert np.all(np.diff(totals) <= 1e-6 * totals[0])
        assert [a.spec.energy_rating_kwh for a in r.results] == [0, 250, 500]
        assert r.cycles.shape == (3, 12)


def test_pv_sweep_without_bes_starts_at_zero_assets(mep):
    cfg, site, unit = mep
    tariff = shipped_tariff("E19TOU")
    res = analysis.sweep(site, [tariff], cfg.battery, analysis.PV_CAPACITY_NO_BES, [0, 100], 0.0, unit, HIGHS)
    zero = analysis.annual_bill(site, tariff, BatterySpec.none(), 0.0, unit, HIGHS)
    assert res["E19TOU"].annual_totals[0] == zero.total
    assert res["E19TOU"].results[1].spec.is_empty


def test_sweep_rejects_bad_input(mep):
    cfg, site, unit = mep
    t = [shipped_tariff("E19TOU")]
    with pytest.raises(ValueError, match="unknown sweep parameter"):
        analysis.sweep(site, t, cfg.battery, "wind", [0, 1])
    with pytest.raises(ValueError, match="ascending"):
        analysis.sweep(site, t, cfg.battery, analysis.BES_POWER_2H, [2, 1])
    with pytest.raises(ValueError, match="at least 2"):
        analysis.sweep(site, t, cfg.battery, analysis.BES_POWER_2H, [1])
    with pytest.raises(ValueError, match="PV unit"):
        analysis.sweep(site, t, cfg.battery, analysis.PV_CAPACITY, [0, 1])


def test_relative_to_self_baseline():
    series = {"A": np.array([3.0, 2.0]), "B": np.array([4.0, 1.0])}
    diff = analysis.relative_to(series, "A")
    assert diff["A"].tolist() == [0, 0] and diff["B"].tolist() == [1, -1]
    ratio = analysis.relative_to(series, "A", analysis.RATIO)
    assert ratio["A"].tolist() == [1, 1] and ratio["B"].tolist() == [4 / 3, 0.5]
    with pytest.raises(ValueError):
        analysis.relative_to(series, "C")


def test_battery_value_added(mep):
    cfg, site, unit = mep
    tariff = shipped_tariff("B19TOU")
    none = analysis.battery_value_added(site, tariff, BatterySpec.none(), cfg.pv_capacity_kw, unit, HIGHS)
    assert none.value == 0.0
    small = analysis.battery_value_added(site, tariff, BatterySpec.with_duration(125, 2), cfg.pv_capacity_kw, unit, HIGHS)
    large = analysis.battery_value_added(site, tariff, BatterySpec.with_duration(250, 2), cfg.pv_capacity_kw, unit, HIGHS)
    assert small.value >= -1e-6 * small.without_bes.total
    assert large.value >= small.value - 1e-6 * small.without_bes.total
    assert large.without_bes.total == small.without_bes.total


def test_bva_sweep_matches_point_bva(mep):
    cfg, site, unit = mep
    tariff = shipped_tariff("E19TOU")
    res = analysis.bva_sweep(site, [tariff], cfg.battery, [0, 250], 2.0, cfg.pv_capacity_kw, unit, HIGHS)["E19TOU"]
    assert res.bva[0] == 0.0
    point = analysis.battery_value_added(site, tariff, cfg.battery.resized(250, 500), cfg.pv_capacity_kw, unit, HIGHS)
    assert np.isclose(res.bva[1], point.value, rtol=1e-9)


def test_parallel_matches_serial(mep):
    cfg, site, unit = mep
    tariff = shipped_tariff("B19OpR")
    serial = analysis.annual_bill(site, tariff, cfg.battery, cfg.pv_capacity_kw, unit, HIGHS, workers=1)
    parallel = analysis.annual_bill(site, tariff, cfg.battery, cfg.pv_capacity_kw, unit, HIGHS, workers=2)
    assert [m.month for m in parallel.months] == list(range(1, 13))
    assert [m.bill.total for m in parallel.months] == [m.bill.total for m in serial.months]


def test_monthly_and_dispatch_csv(mep, tmp_path):
    cfg, site, unit = mep
    annual = analysis.annual_bill(site, shipped_tariff("E19TOU"), cfg.battery, cfg.pv_capacity_kw, unit, HIGHS)
    analysis.write_monthly_csv(tmp_path / "m.csv", annual)
    analysis.write_dispatch_csv(tmp_path / "d.csv", annual)
    rows = read_csv(tmp_path / "m.csv")
    assert [r["month"] for r in rows] == [str(m) for m in range(1, 13)] + ["annual"]
    assert float(rows[-1]["total"]) == annual.total
    assert sum(float(r["total"]) for r in rows[:-1]) == pytest.approx(annual.total, rel=1e-12)
    assert rows[0]["total_display"] == f"{annual.months[0].bill.total:.2f}"
    disp = read_csv(tmp_path / "d.csv")
    assert len(disp) == 8760
    assert list(disp[0]) == ["timestamp", "base_kw", "pv_kw", "charge_kw", "discharge_kw", "soc_kwh", "net_kw", "import_kw"]
    assert disp[0]["timestamp"] == "2019-01-01T00:00:00-08:00"
