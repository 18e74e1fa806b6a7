"""Battery parameters, state-of-charge stepping and dispatch validation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .profiles import TimeGrid

DEFAULT_EFFICIENCY = 0.85


@dataclass(frozen=True)
class BatterySpec:
    """Energy rating (kWh), power rating (kW), round-trip efficiency and SOC limits.

    Efficiency is charged entirely on the way in: storing ``P`` kW for ``h``
    hours adds ``eta * P * h`` kWh.
    """

    energy_rating_kwh: float
    power_rating_kw: float
    round_trip_efficiency: float = DEFAULT_EFFICIENCY
    soc_min_kwh: float | None = None
    soc_max_kwh: float | None = None
    soc_init_kwh: float | None = None

    def __post_init__(self):
        ber = float(self.energy_rating_kwh)
        if self.soc_min_kwh is None:
            object.__setattr__(self, "soc_min_kwh", 0.0)
        if self.soc_max_kwh is None:
            object.__setattr__(self, "soc_max_kwh", ber)
        if self.soc_init_kwh is None:
            object.__setattr__(self, "soc_init_kwh", 0.5 * ber)
        values = (
            ber,
            self.power_rating_kw,
            self.round_trip_efficiency,
            self.soc_min_kwh,
            self.soc_max_kwh,
            self.soc_init_kwh,
        )
        if not all(math.isfinite(v) for v in values):
            raise ValueError("battery parameters must be finite")
        if ber < 0 or self.power_rating_kw < 0:
            raise ValueError("energy and power ratings must be >= 0")
        if not 0 < self.round_trip_efficiency <= 1:
            raise ValueError("round_trip_efficiency must be in (0, 1]")
        if not 0 <= self.soc_min_kwh <= self.soc_init_kwh <= self.soc_max_kwh <= ber:
            raise ValueError(
                "need 0 <= soc_min <= soc_init <= soc_max <= energy_rating, got "
                f"{self.soc_min_kwh}, {self.soc_init_kwh}, {self.soc_max_kwh}, {ber}"
            )

    @classmethod
    def with_duration(cls, power_kw: float, hours: float, **kwargs) -> "BatterySpec":
        """A battery whose energy rating is ``hours`` times its power rating."""
        return cls(energy_rating_kwh=power_kw * hours, power_rating_kw=power_kw, **kwargs)

    @classmethod
    def none(cls) -> "BatterySpec":
        return cls(0.0, 0.0)

    def resized(self, power_kw: float, energy_kwh: float) -> "BatterySpec":
        """Same efficiency and SOC limits (as fractions of the energy rating) at a new size."""
        ber = self.energy_rating_kwh
        if ber > 0:
            fractions = (self.soc_min_kwh / ber, self.soc_max_kwh / ber, self.soc_init_kwh / ber)
        else:
            fractions = (0.0, 1.0, 0.5)
        jmin, jmax, jinit = (min(f * energy_kwh, energy_kwh) for f in fractions)
        return BatterySpec(
            energy_kwh,
            power_kw,
            self.round_trip_efficiency,
            min(jmin, jinit),
            max(jmax, jinit),
            jinit,
        )

    @property
    def is_empty(self) -> bool:
        return self.energy_rating_kwh == 0 or self.power_rating_kw == 0


@dataclass(frozen=True, eq=False)
class BatteryDispatch:
    """Charge/discharge power per interval and the SOC at the end of each interval."""

    grid: TimeGrid
    charge_kw: np.ndarray
    discharge_kw: np.ndarray
    soc_kwh: np.ndarray

    def __post_init__(self):
        for name in ("charge_kw", "discharge_kw", "soc_kwh"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.count,):
                raise ValueError(f"{name} has {arr.size} values, grid has {self.grid.count}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def idle(cls, grid: TimeGrid, spec: BatterySpec) -> "BatteryDispatch":
        zeros = np.zeros(grid.count)
        return cls(grid, zeros, zeros, np.full(grid.count, float(spec.soc_init_kwh)))

    @classmethod
    def from_power(cls, grid: TimeGrid, spec: BatterySpec, charge_kw, discharge_kw) -> "BatteryDispatch":
        """Dispatch whose SOC trajectory is stepped from ``spec.soc_init_kwh``."""
        soc = soc_trajectory(
            spec.soc_init_kwh, charge_kw, discharge_kw, spec.round_trip_efficiency, grid.step_hours
        )
        return cls(grid, charge_kw, discharge_kw, soc)

    @property
    def discharged_kwh(self) -> float:
        return float(self.discharge_kw.sum() * self.grid.step_hours)

    def full_cycles(self, spec: BatterySpec) -> float:
        if spec.energy_rating_kwh == 0:
            return 0.0
        return self.discharged_kwh / spec.energy_rating_kwh


def soc_step(prev_soc_kwh: float, charge_kw: float, discharge_kw: float, eta: float, step_hours: float) -> float:
    return prev_soc_kwh + step_hours * (eta * charge_kw - discharge_kw)


def soc_trajectory(soc_init, charge_kw, discharge_kw, eta, step_hours) -> np.ndarray:
    out = np.empty(len(charge_kw))
    soc = soc_init
    for t, (c, d) in enumerate(zip(charge_kw, discharge_kw)):
        soc = soc_step(soc, c, d, eta, step_hours)
        out[t] = soc
    return out


@dataclass(frozen=True)
class Violation:
    constraint: str
    t: int
    amount: float

    def __str__(self):
        where = "" if self.t < 0 else f" at t={self.t}"
        return f"{self.constraint}{where} violated by {self.amount:.3g}"


def validate_dispatch(
    spec: BatterySpec, dispatch: BatteryDispatch, base_demand, tolerance: float = 1e-6
) -> list[Violation]:
    """Every battery constraint that ``dispatch`` breaks by more than ``tolerance``.

    An empty list means the dispatch is admissible.
    """
    base = np.asarray(base_demand, dtype=float)
    n = dispatch.grid.count
    if base.shape != (n,):
        raise ValueError(f"base demand has {base.size} values, dispatch has {n}")
    h = dispatch.grid.step_hours
    eta = spec.round_trip_efficiency
    cha, dis, soc = dispatch.charge_kw, dispatch.discharge_kw, dispatch.soc_kwh
    prev = np.concatenate([[spec.soc_init_kwh], soc[:-1]])
    out: list[Violation] = []

    def check(name, excess):
        for t in np.flatnonzero(excess > tolerance):
            out.append(Violation(name, int(t), float(excess[t])))

    check("charge_nonnegative", -cha)
    check("discharge_nonnegative", -dis)
    check("soc_recursion", np.abs(soc - (prev + h * (eta * cha - dis))))
    terminal = abs(soc[-1] - spec.soc_init_kwh)
    if terminal > tolerance:
        out.append(Violation("terminal_soc", n - 1, float(terminal)))
    check("soc_min", spec.soc_min_kwh - soc)
    check("soc_max", soc - spec.soc_max_kwh)
    check("charge_headroom", h * eta * cha - (spec.energy_rating_kwh - prev))
    check("discharge_available", h * dis - prev)
    check("power_rating", cha + dis - spec.power_rating_kw)
    check("no_export", dis - (base + cha))
    return out
