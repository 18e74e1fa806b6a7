"""Shared builders for tests: toy instances, small tariffs, the example sites."""

from __future__ import annotations

from datetime import datetime
from functools import lru_cache
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from touopt.bes import BatteryDispatch, BatterySpec
from touopt.config import load_config
from touopt.lp_model import MonthlyInstance
from touopt.profiles import SiteProfile, TimeGrid, load_site
from touopt.tariff import DemandPeriod, DemandPeriodSet, load_tariff, tariff_from_dict

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
TZ = "America/Los_Angeles"
TARIFF_NAMES = ("E19TOU", "E19OpR", "B19TOU", "B19OpR", "B19OpS")


def grid(count: int, step_minutes: int = 60, start=(2019, 7, 1)) -> TimeGrid:
    return TimeGrid(datetime(*start, tzinfo=ZoneInfo(TZ)), step_minutes, count)


def instance(
    base,
    pv=None,
    spec: BatterySpec | None = None,
    er=0.1,
    nsr=None,
    dr_max=0.0,
    periods=(),
    step_minutes: int = 60,
) -> MonthlyInstance:
    """Hand-built instance; scalar rates are broadcast over the horizon."""
    base = np.asarray(base, dtype=float)
    T = base.size
    g = grid(T, step_minutes)
    pv = np.zeros(T) if pv is None else np.asarray(pv, dtype=float)
    er = np.broadcast_to(np.asarray(er, dtype=float), (T,)).copy()
    nsr = er.copy() if nsr is None else np.broadcast_to(np.asarray(nsr, dtype=float), (T,)).copy()
    dps = []
    for label, mask, rate in periods:
        m = np.asarray(mask, dtype=bool).copy()
        m.setflags(write=False)
        dps.append(DemandPeriod(label, m, rate))
    return MonthlyInstance(
        g, SiteProfile(g, base, pv), spec or BatterySpec.none(), er, nsr, dr_max, DemandPeriodSet(tuple(dps)), "test"
    )


def random_toy(rng: np.random.Generator, count: int) -> MonthlyInstance:
    """Random hourly instance with one demand period and a battery of modest size.

    Demand 40-120 kW, PV up to 80 kW, battery 10-30 kW with 1, 2 or 4 hours of
    storage, energy rates 0.05-0.30 $/kWh with a 0.025 $/kWh export haircut.
    """
    base = rng.uniform(40, 120, count)
    pv = np.maximum(0, rng.uniform(-40, 80, count))
    er = rng.uniform(0.05, 0.3, count)
    nsr = np.maximum(er - 0.025, 0)
    mask = np.zeros(count, bool)
    s = rng.integers(0, count - 2)
    mask[s : s + rng.integers(2, count // 2 + 1)] = True
    period_rate = rng.uniform(0.05, 0.7)
    spec = BatterySpec.with_duration(rng.uniform(10, 30), float(rng.choice([1, 2, 4])))
    return instance(base, pv, spec, er, nsr, rng.uniform(0, 0.7), [("peak", mask, period_rate)])


def flat_tariff_doc(name="FLAT", rate=0.10, **extra) -> dict:
    doc = {
        "name": name,
        "timezone": TZ,
        "seasons": {"all": {"start": "01-01", "end": "12-31"}},
        "periods": {
            "flat": {
                "energy_rate": rate,
                "windows": [{"seasons": ["all"], "days": ["weekday", "weekend", "holiday"], "start": "00:00", "end": "24:00"}],
            }
        },
    }
    doc.update(extra)
    return doc


def flat_tariff(name="FLAT", rate=0.10, **extra):
    return tariff_from_dict(flat_tariff_doc(name, rate, **extra))


def shipped_tariff(name: str):
    return load_tariff(DATA / "tariffs" / f"{name}.toml")


@lru_cache(maxsize=None)
def example_site(case: str, resolution: int = 60):
    """(config, site, pv unit) of a shipped example config."""
    cfg = load_config(DATA / "configs" / f"{case}.toml")
    site, unit = load_site(
        cfg.load_profile, cfg.pv_unit_profile, cfg.year, cfg.timezone, cfg.file_resolution, resolution
    )
    return cfg, site, unit


def random_feasible_dispatch(inst: MonthlyInstance, rng: np.random.Generator) -> BatteryDispatch:
    """Random dispatch satisfying every battery constraint.

    Each step aims at a random target charge, clipped to what the power
    rating allows now and to what still lets the battery return to its
    starting charge by the end of the horizon.
    """
    spec = inst.spec
    T, h, eta = inst.grid.count, inst.step_hours, spec.round_trip_efficiency
    bpr, j0 = spec.power_rating_kw, spec.soc_init_kwh
    dis_cap = np.minimum(bpr, inst.base_kw)  # no export from the battery
    # most charge that can still be removed / added over intervals t+1..T-1
    drain = np.concatenate([np.cumsum((h * dis_cap)[::-1])[::-1][1:], [0.0]])
    fill = h * eta * bpr * np.arange(T - 1, -1, -1)
    cha, dis = np.zeros(T), np.zeros(T)
    soc = j0
    for t in range(T):
        lo = max(spec.soc_min_kwh, soc - h * dis_cap[t], j0 - fill[t])
        hi = min(spec.soc_max_kwh, soc + h * eta * bpr, j0 + drain[t])
        target = j0 if t == T - 1 else rng.uniform(lo, hi)
        target = min(max(target, lo), hi)
        if target >= soc:
            cha[t] = (target - soc) / (h * eta)
        else:
            dis[t] = (soc - target) / h
        soc = soc + h * (eta * cha[t] - dis[t])
    return BatteryDispatch.from_power(inst.grid, spec, cha, dis)
