"""Demand and PV time series: time grids, CSV ingest, resampling, PV scaling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from functools import cached_property
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

DEMAND_COLUMN = "kw"
PV_UNIT_COLUMN = "kw_per_kw"
PV_UNIT_MAX = 1.2


class ProfileError(ValueError):
    """Malformed or misaligned profile data."""


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ProfileError(f"{name} must be one-dimensional")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ProfileError(f"{name} has a missing or non-finite value at interval {bad}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """``count`` consecutive intervals of ``step_minutes`` starting at ``start``.

    ``start`` must be timezone-aware. Interval ``t`` covers
    ``[start + t*step, start + (t+1)*step)`` in absolute time, so grids built
    over DST transitions have 23- or 25-hour days in local clock terms.
    """

    start: datetime
    step_minutes: int = 15
    count: int = 1

    def __post_init__(self):
        if self.start.tzinfo is None or self.start.utcoffset() is None:
            raise ValueError("TimeGrid.start must be timezone-aware")
        if not isinstance(self.step_minutes, (int, np.integer)) or self.step_minutes <= 0:
            raise ValueError("step_minutes must be a positive integer")
        if 60 % self.step_minutes != 0:
            raise ValueError(f"step_minutes={self.step_minutes} does not divide 60")
        if self.count < 1:
            raise ValueError("count must be at least 1")

    @classmethod
    def for_month(cls, year: int, month: int, tz: str | ZoneInfo, step_minutes: int = 15) -> "TimeGrid":
        zone = ZoneInfo(tz) if isinstance(tz, str) else tz
        start = datetime(year, month, 1, tzinfo=zone)
        end = datetime(year + month // 12, month % 12 + 1, 1, tzinfo=zone)
        return cls(start, step_minutes, _intervals_between(start, end, step_minutes))

    @classmethod
    def for_year(cls, year: int, tz: str | ZoneInfo, step_minutes: int = 15) -> "TimeGrid":
        zone = ZoneInfo(tz) if isinstance(tz, str) else tz
        start = datetime(year, 1, 1, tzinfo=zone)
        end = datetime(year + 1, 1, 1, tzinfo=zone)
        return cls(start, step_minutes, _intervals_between(start, end, step_minutes))

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    @property
    def end(self) -> datetime:
        return self.timestamp(self.count)

    def timestamp(self, t: int) -> datetime:
        """Local start time of interval ``t``."""
        utc = self.start.astimezone(timezone.utc) + t * self.step
        return utc.astimezone(self.start.tzinfo)

    @cached_property
    def index(self) -> pd.DatetimeIndex:
        """Local interval start times as a pandas index."""
        utc = pd.Timestamp(self.start).tz_convert("UTC")
        idx = pd.date_range(utc, periods=self.count, freq=f"{self.step_minutes}min")
        return idx.tz_convert(self.start.tzinfo)

    def offset_of(self, other: "TimeGrid") -> int:
        """Index in this grid where ``other`` begins; ``other`` must nest inside."""
        if other.step_minutes != self.step_minutes:
            raise ProfileError(
                f"grid step {other.step_minutes} min does not match {self.step_minutes} min"
            )
        delta = other.start.astimezone(timezone.utc) - self.start.astimezone(timezone.utc)
        steps, rem = divmod(delta, self.step)
        if rem:
            raise ProfileError("grid start is not aligned to interval boundaries")
        if steps < 0 or steps + other.count > self.count:
            raise ProfileError(
                f"grid {other.start.isoformat()} + {other.count} intervals is outside "
                f"{self.start.isoformat()} + {self.count} intervals"
            )
        return int(steps)


def _intervals_between(start: datetime, end: datetime, step_minutes: int) -> int:
    # same-tzinfo subtraction would use wall-clock time; go through UTC
    seconds = (end.astimezone(timezone.utc) - start.astimezone(timezone.utc)).total_seconds()
    count, rem = divmod(int(seconds), step_minutes * 60)
    if rem:
        raise ValueError("range is not a whole number of intervals")
    return count


@dataclass(frozen=True, eq=False)
class SiteProfile:
    """Base demand and PV output (kW) on a shared grid."""

    grid: TimeGrid
    base_demand_kw: np.ndarray
    pv_generation_kw: np.ndarray

    def __post_init__(self):
        base = _frozen(self.base_demand_kw, "base_demand_kw")
        pv = _frozen(self.pv_generation_kw, "pv_generation_kw")
        for name, arr in (("base_demand_kw", base), ("pv_generation_kw", pv)):
            if arr.shape != (self.grid.count,):
                raise ProfileError(f"{name} has {arr.size} values, grid has {self.grid.count}")
            if (arr < 0).any():
                t = int(np.flatnonzero(arr < 0)[0])
                raise ProfileError(f"{name} is negative at interval {t}")
        object.__setattr__(self, "base_demand_kw", base)
        object.__setattr__(self, "pv_generation_kw", pv)

    def slice(self, grid: TimeGrid) -> "SiteProfile":
        k = self.grid.offset_of(grid)
        return SiteProfile(
            grid,
            self.base_demand_kw[k : k + grid.count],
            self.pv_generation_kw[k : k + grid.count],
        )


@dataclass(frozen=True, eq=False)
class PvUnitProfile:
    """PV output per kW of installed capacity."""

    grid: TimeGrid
    per_kw_output: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.per_kw_output, "per_kw_output")
        if arr.shape != (self.grid.count,):
            raise ProfileError(f"per_kw_output has {arr.size} values, grid has {self.grid.count}")
        if (arr < 0).any() or (arr > PV_UNIT_MAX).any():
            t = int(np.flatnonzero((arr < 0) | (arr > PV_UNIT_MAX))[0])
            raise ProfileError(f"per_kw_output[{t}]={arr[t]} outside [0, {PV_UNIT_MAX}]")
        object.__setattr__(self, "per_kw_output", arr)

    def slice(self, grid: TimeGrid) -> "PvUnitProfile":
        k = self.grid.offset_of(grid)
        return PvUnitProfile(grid, self.per_kw_output[k : k + grid.count])


def scale_pv(unit: PvUnitProfile, capacity_kw: float) -> np.ndarray:
    """PV output series for a system of ``capacity_kw``."""
    if not np.isfinite(capacity_kw):
        raise ValueError("PV capacity must be finite")
    if capacity_kw < 0:
        raise ValueError(f"PV capacity must be >= 0, got {capacity_kw}")
    return unit.per_kw_output * capacity_kw


def resample(series, from_step: int, to_step: int) -> np.ndarray:
    """Change the interval length of a power series.

    Downsampling averages power over each coarse interval; upsampling repeats
    it. Both keep ``sum(value * step)`` unchanged.
    """
    values = np.asarray(series, dtype=float)
    if from_step <= 0 or to_step <= 0:
        raise ValueError("steps must be positive")
    if to_step == from_step:
        return values.copy()
    if to_step > from_step:
        ratio, rem = divmod(to_step, from_step)
        if rem:
            raise ValueError(f"cannot resample {from_step} min to {to_step} min")
        if values.size % ratio:
            raise ValueError(f"{values.size} values do not fill whole {to_step}-min intervals")
        return values.reshape(-1, ratio).mean(axis=1)
    ratio, rem = divmod(from_step, to_step)
    if rem:
        raise ValueError(f"cannot resample {from_step} min to {to_step} min")
    return np.repeat(values, ratio)


def resample_grid(grid: TimeGrid, to_step: int) -> TimeGrid:
    total = grid.count * grid.step_minutes
    if total % to_step:
        raise ValueError(f"grid does not span whole {to_step}-min intervals")
    return TimeGrid(grid.start, to_step, total // to_step)


# -- CSV ---------------------------------------------------------------------


def _parse_timestamp(text: str, zone) -> datetime:
    ts = datetime.fromisoformat(text.strip())
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=zone)
    return ts


def parse_profile_csv(path, expected_grid: TimeGrid, column: str = DEMAND_COLUMN) -> np.ndarray:
    """Read a ``timestamp,<column>`` CSV and check it row by row against ``expected_grid``.

    Timestamps should carry a UTC offset; naive timestamps are read in the
    grid's timezone.
    """
    path = Path(path)
    zone = expected_grid.start.tzinfo
    values = np.empty(expected_grid.count)
    expected_utc = expected_grid.index.tz_convert("UTC")
    seen = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", column]:
            raise ProfileError(f"{path}: header must be 'timestamp,{column}', got {header}")
        previous = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ProfileError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                ts = _parse_timestamp(row[0], zone)
            except ValueError:
                raise ProfileError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
            try:
                value = float(row[1])
            except ValueError:
                raise ProfileError(f"{path}:{lineno}: non-numeric value {row[1]!r}") from None
            if not np.isfinite(value):
                raise ProfileError(f"{path}:{lineno}: non-finite value {row[1]!r}")
            if previous is not None and ts == previous:
                raise ProfileError(f"{path}:{lineno}: duplicate timestamp {row[0]}")
            if seen >= expected_grid.count:
                raise ProfileError(f"{path}:{lineno}: more rows than the {expected_grid.count}-interval grid")
            if pd.Timestamp(ts).tz_convert("UTC") != expected_utc[seen]:
                raise ProfileError(
                    f"{path}:{lineno}: timestamp {row[0]} does not match grid interval "
                    f"{seen} ({expected_grid.timestamp(seen).isoformat()}); missing interval?"
                )
            values[seen] = value
            previous = ts
            seen += 1
    if seen < expected_grid.count:
        raise ProfileError(
            f"{path}: missing interval {seen} ({expected_grid.timestamp(seen).isoformat()}); "
            f"got {seen} of {expected_grid.count} rows"
        )
    return values


def write_profile_csv(path, grid: TimeGrid, values, column: str = DEMAND_COLUMN) -> None:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.count,):
        raise ProfileError(f"{values.size} values for a {grid.count}-interval grid")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", column])
        for ts, v in zip(grid.index, values):
            writer.writerow([ts.isoformat(), repr(float(v))])


def load_site(
    demand_path,
    pv_unit_path,
    year: int,
    tz: str,
    file_step_minutes: int,
    step_minutes: int,
    pv_capacity_kw: float = 0.0,
) -> tuple[SiteProfile, PvUnitProfile]:
    """Read a year of demand and PV-per-kW data and bring both to ``step_minutes``.

    Without ``pv_unit_path`` the site has no PV.
    """
    file_grid = TimeGrid.for_year(year, tz, file_step_minutes)
    demand = parse_profile_csv(demand_path, file_grid, DEMAND_COLUMN)
    if (demand < 0).any():
        t = int(np.flatnonzero(demand < 0)[0])
        raise ProfileError(f"{demand_path}: negative demand at row {t + 2}")
    if pv_unit_path is None:
        unit = np.zeros(file_grid.count)
    else:
        unit = parse_profile_csv(pv_unit_path, file_grid, PV_UNIT_COLUMN)
    grid = resample_grid(file_grid, step_minutes)
    demand = resample(demand, file_step_minutes, step_minutes)
    unit_profile = PvUnitProfile(grid, resample(unit, file_step_minutes, step_minutes))
    site = SiteProfile(grid, demand, scale_pv(unit_profile, pv_capacity_kw))
    return site, unit_profile
