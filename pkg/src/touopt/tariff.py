"""Time-of-use tariffs as data.

A tariff file is TOML; see ``docs/tariff_format.md`` for the grammar. The
calendar maps every local (date, clock minute) to exactly one named period.
Seasonal variants of a period (summer peak vs winter peak) are separate
periods, since they carry different rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .profiles import TimeGrid

WEEKDAY = "weekday"
WEEKEND = "weekend"
HOLIDAY = "holiday"
DAY_CLASSES = (WEEKDAY, WEEKEND, HOLIDAY)

BASE = "base"
OPTION_R = "option_r"
OPTION_S = "option_s"
OPTIONS = (BASE, OPTION_R, OPTION_S)

OPTION_R_PV_SHARE = 0.15
OPTION_S_POWER_SHARE = 0.10

_MINUTES_PER_DAY = 1440
# a leap year, so Feb 29 gets a season too
_REF_YEAR = 2000


class TariffError(ValueError):
    """Invalid tariff definition or an uncovered timestamp."""


def _parse_clock(text: str) -> int:
    try:
        hh, mm = text.split(":")
        minutes = int(hh) * 60 + int(mm)
    except ValueError:
        raise TariffError(f"bad clock time {text!r}, expected HH:MM") from None
    if not 0 <= int(mm) < 60 or not 0 <= minutes <= _MINUTES_PER_DAY:
        raise TariffError(f"clock time {text!r} outside 00:00-24:00")
    return minutes


def _parse_month_day(text: str) -> tuple[int, int]:
    try:
        mm, dd = (int(part) for part in text.split("-"))
        date(_REF_YEAR, mm, dd)
    except ValueError:
        raise TariffError(f"bad month-day {text!r}, expected MM-DD") from None
    return mm, dd


@dataclass(frozen=True)
class Season:
    """Inclusive month-day range; ``start > end`` wraps over the new year."""

    name: str
    start: str
    end: str

    def __post_init__(self):
        _parse_month_day(self.start)
        _parse_month_day(self.end)

    def contains(self, month: int, day: int) -> bool:
        key = (month, day)
        lo, hi = _parse_month_day(self.start), _parse_month_day(self.end)
        if lo <= hi:
            return lo <= key <= hi
        return key >= lo or key <= hi


@dataclass(frozen=True)
class Window:
    """Clock range ``[start, end)`` on the listed seasons and day classes."""

    seasons: tuple[str, ...]
    day_classes: tuple[str, ...]
    start: str
    end: str

    def __post_init__(self):
        object.__setattr__(self, "seasons", tuple(self.seasons))
        object.__setattr__(self, "day_classes", tuple(self.day_classes))
        lo, hi = _parse_clock(self.start), _parse_clock(self.end)
        if lo >= hi:
            raise TariffError(
                f"window {self.start}-{self.end} is empty or wraps midnight; split it in two"
            )
        bad = set(self.day_classes) - set(DAY_CLASSES)
        if bad:
            raise TariffError(f"unknown day classes {sorted(bad)}")


@dataclass(frozen=True)
class TouCalendar:
    timezone: str
    seasons: tuple[Season, ...]
    periods: tuple[tuple[str, tuple[Window, ...]], ...]
    holidays: tuple[date, ...] = ()
    _table: np.ndarray = field(default=None, repr=False, compare=False)
    _season_of_day: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "seasons", tuple(self.seasons))
        object.__setattr__(self, "periods", tuple((n, tuple(w)) for n, w in self.periods))
        object.__setattr__(self, "holidays", tuple(sorted(set(self.holidays))))
        try:
            ZoneInfo(self.timezone)
        except Exception:
            raise TariffError(f"unknown timezone {self.timezone!r}") from None
        self._build()

    @property
    def period_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.periods)

    @property
    def zone(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)

    def _build(self) -> None:
        season_names = [s.name for s in self.seasons]
        if len(set(season_names)) != len(season_names):
            raise TariffError("duplicate season names")
        names = self.period_names
        if len(set(names)) != len(names):
            raise TariffError("duplicate period names")

        # season per (month, day) of a leap year
        by_day = np.full((13, 32), -1, dtype=np.int16)
        for d in _days_of(_REF_YEAR):
            hits = [i for i, s in enumerate(self.seasons) if s.contains(d.month, d.day)]
            if len(hits) != 1:
                what = "no season" if not hits else f"seasons {[season_names[i] for i in hits]}"
                raise TariffError(f"{d:%m-%d} is covered by {what}")
            by_day[d.month, d.day] = hits[0]

        table = np.full((len(self.seasons), len(DAY_CLASSES), _MINUTES_PER_DAY), -1, dtype=np.int16)
        for p, (name, windows) in enumerate(self.periods):
            for w in windows:
                unknown = set(w.seasons) - set(season_names)
                if unknown:
                    raise TariffError(f"period {name!r} references unknown seasons {sorted(unknown)}")
                lo, hi = _parse_clock(w.start), _parse_clock(w.end)
                for sname in w.seasons:
                    s = season_names.index(sname)
                    for dc in w.day_classes:
                        c = DAY_CLASSES.index(dc)
                        cells = table[s, c, lo:hi]
                        if (cells >= 0).any():
                            other = names[int(cells[cells >= 0][0])]
                            raise TariffError(
                                f"period {name!r} overlaps {other!r} on {sname}/{dc} {w.start}-{w.end}"
                            )
                        table[s, c, lo:hi] = p
        if (table < 0).any():
            s, c, minute = (int(v) for v in np.argwhere(table < 0)[0])
            raise TariffError(
                f"no period covers {season_names[s]}/{DAY_CLASSES[c]} at "
                f"{minute // 60:02d}:{minute % 60:02d}"
            )
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_season_of_day", by_day)

    def day_class(self, day: date) -> str:
        if day in self.holidays:
            return HOLIDAY
        return WEEKEND if day.weekday() >= 5 else WEEKDAY

    def period_of(self, timestamp: datetime) -> str:
        """Name of the period containing ``timestamp`` (converted to local time)."""
        if timestamp.tzinfo is None:
            raise TariffError("timestamp must be timezone-aware")
        local = timestamp.astimezone(self.zone)
        s = self._season_of_day[local.month, local.day]
        c = DAY_CLASSES.index(self.day_class(local.date()))
        p = self._table[s, c, local.hour * 60 + local.minute]
        if s < 0 or p < 0:
            raise TariffError(f"calendar does not cover {timestamp.isoformat()}")
        return self.period_names[p]

    @property
    def season_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.seasons)

    def season_of(self, timestamp: datetime) -> str:
        if timestamp.tzinfo is None:
            raise TariffError("timestamp must be timezone-aware")
        local = timestamp.astimezone(self.zone)
        return self.seasons[self._season_of_day[local.month, local.day]].name

    def season_indices(self, grid: TimeGrid) -> np.ndarray:
        """Season index (into ``seasons``) of each interval's start."""
        idx = grid.index.tz_convert(self.zone)
        return self._season_of_day[idx.month, idx.day].astype(int)

    def periods_by_season(self) -> dict[str, set[str]]:
        """Seasons in which each period has at least one window."""
        return {name: {s for w in windows for s in w.seasons} for name, windows in self.periods}

    def period_indices(self, grid: TimeGrid) -> np.ndarray:
        """Period index (into ``period_names``) of each interval's start."""
        idx = grid.index.tz_convert(self.zone)
        seasons = self._season_of_day[idx.month, idx.day]
        hol = pd.Index(idx.date).isin(list(self.holidays))
        classes = np.where(hol, 2, np.where(idx.dayofweek >= 5, 1, 0))
        minutes = idx.hour * 60 + idx.minute
        out = self._table[seasons, classes, minutes].astype(int)
        if (seasons < 0).any() or (out < 0).any():
            raise TariffError("calendar does not cover the grid")
        return out


def _days_of(year: int):
    d = date(year, 1, 1)
    while d.year == year:
        yield d
        d = date.fromordinal(d.toordinal() + 1)


def _normalize_rate(value, where: str):
    """A rate is a number or a table ``{season: number}``."""
    if isinstance(value, dict):
        return {str(k): float(v) for k, v in value.items()}
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TariffError(f"{where}: rate must be a number or a table of season rates")
    return float(value)


def _rate_values(value) -> list[float]:
    return list(value.values()) if isinstance(value, dict) else [value]


def _scale_rate(value, factor: float):
    if isinstance(value, dict):
        return {k: v * factor for k, v in value.items()}
    return value * factor


@dataclass(frozen=True)
class TariffSchedule:
    """Rates attached to a :class:`TouCalendar`.

    ``energy_rates`` must name every calendar period. Periods missing from
    ``period_demand_rates`` carry no period demand charge. A period rate is
    either one number or a table ``{season: rate}``; an energy table must list
    every season in which the period occurs, a demand table may omit seasons
    (rate 0 there).
    """

    name: str
    calendar: TouCalendar
    energy_rates: dict
    max_demand_rate: float = 0.0
    period_demand_rates: dict = field(default_factory=dict)
    daily_demand_rate: float | None = None
    non_bypassable_charge: float = 0.0
    option: str = BASE
    description: str = ""

    def __post_init__(self):
        names = set(self.calendar.period_names)
        seasons = set(self.calendar.season_names)
        energy = {k: _normalize_rate(v, f"{self.name}: energy rate of {k}") for k, v in self.energy_rates.items()}
        demand = {
            k: _normalize_rate(v, f"{self.name}: demand rate of {k}") for k, v in self.period_demand_rates.items()
        }
        object.__setattr__(self, "energy_rates", energy)
        object.__setattr__(self, "period_demand_rates", demand)
        missing = names - set(energy)
        if missing:
            raise TariffError(f"{self.name}: no energy rate for periods {sorted(missing)}")
        for label, rates in (("energy", energy), ("demand", demand)):
            unknown = set(rates) - names
            if unknown:
                raise TariffError(f"{self.name}: {label} rates for unknown periods {sorted(unknown)}")
            for period, value in rates.items():
                if isinstance(value, dict) and set(value) - seasons:
                    raise TariffError(
                        f"{self.name}: {label} rate of {period} names unknown seasons {sorted(set(value) - seasons)}"
                    )
        occurs = self.calendar.periods_by_season()
        for period, value in energy.items():
            if isinstance(value, dict) and occurs[period] - set(value):
                raise TariffError(
                    f"{self.name}: energy rate of {period} has no entry for seasons {sorted(occurs[period] - set(value))}"
                )
        scalars = [self.max_demand_rate, self.non_bypassable_charge]
        if self.daily_demand_rate is not None:
            scalars.append(self.daily_demand_rate)
        values = [v for r in energy.values() for v in _rate_values(r)]
        demand_values = [v for r in demand.values() for v in _rate_values(r)]
        if not all(math.isfinite(v) for v in values + demand_values + scalars):
            raise TariffError(f"{self.name}: rates must be finite")
        demand_values.append(self.max_demand_rate)
        if self.daily_demand_rate is not None:
            demand_values.append(self.daily_demand_rate)
        if min(demand_values) < 0:
            raise TariffError(f"{self.name}: demand rates must be >= 0")
        if self.non_bypassable_charge < 0:
            raise TariffError(f"{self.name}: non_bypassable_charge must be >= 0")
        if self.option not in OPTIONS:
            raise TariffError(f"{self.name}: option must be one of {OPTIONS}")

    def _table(self, rates: dict) -> np.ndarray:
        """Rate per (period, season); 0 where no rate is given."""
        cal = self.calendar
        out = np.zeros((len(cal.period_names), len(cal.season_names)))
        for p, period in enumerate(cal.period_names):
            value = rates.get(period, 0.0)
            for s, season in enumerate(cal.season_names):
                out[p, s] = value.get(season, 0.0) if isinstance(value, dict) else value
        return out

    def energy_rate_table(self) -> np.ndarray:
        return self._table(self.energy_rates)

    def demand_rate_table(self) -> np.ndarray:
        return self._table(self.period_demand_rates)

    def energy_rate_at(self, timestamp: datetime) -> float:
        cal = self.calendar
        p = cal.period_names.index(cal.period_of(timestamp))
        s = cal.season_names.index(cal.season_of(timestamp))
        return float(self.energy_rate_table()[p, s])

    def scaled(self, factor: float) -> "TariffSchedule":
        """Same tariff with every rate (and the non-bypassable charge) times ``factor``."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return replace(
            self,
            energy_rates={k: _scale_rate(v, factor) for k, v in self.energy_rates.items()},
            max_demand_rate=self.max_demand_rate * factor,
            period_demand_rates={k: _scale_rate(v, factor) for k, v in self.period_demand_rates.items()},
            daily_demand_rate=None if self.daily_demand_rate is None else self.daily_demand_rate * factor,
            non_bypassable_charge=self.non_bypassable_charge * factor,
        )


@dataclass(frozen=True, eq=False)
class DemandPeriod:
    label: str
    members: np.ndarray  # bool mask over the month grid
    rate: float


@dataclass(frozen=True, eq=False)
class DemandPeriodSet:
    periods: tuple[DemandPeriod, ...] = ()

    def __post_init__(self):
        labels = [p.label for p in self.periods]
        if len(set(labels)) != len(labels):
            raise TariffError("demand period labels must be unique")

    def __len__(self):
        return len(self.periods)

    def __iter__(self):
        return iter(self.periods)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.periods)

    def scaled(self, factor: float) -> "DemandPeriodSet":
        return DemandPeriodSet(tuple(DemandPeriod(p.label, p.members, p.rate * factor) for p in self.periods))


def period_of(calendar: TouCalendar, timestamp: datetime) -> str:
    return calendar.period_of(timestamp)


def energy_rate_series(tariff: TariffSchedule, grid: TimeGrid) -> np.ndarray:
    """Energy rate in $/kWh for each interval of ``grid``."""
    cal = tariff.calendar
    return tariff.energy_rate_table()[cal.period_indices(grid), cal.season_indices(grid)]


def nem_sell_rate_series(tariff: TariffSchedule, grid: TimeGrid) -> np.ndarray:
    """Export credit: energy rate less the non-bypassable charge, floored at zero."""
    return np.maximum(energy_rate_series(tariff, grid) - tariff.non_bypassable_charge, 0.0)


def demand_periods_for_month(tariff: TariffSchedule, grid: TimeGrid) -> DemandPeriodSet:
    """Materialize the demand-charge periods of ``tariff`` on ``grid``.

    One entry per TOU period with a nonzero demand rate that occurs in the
    grid, then (with a daily rate) one entry per local calendar day. A month
    that straddles a season change gets one entry per (period, season), labelled
    ``period@season``.
    """
    cal = tariff.calendar
    indices = cal.period_indices(grid)
    seasons = cal.season_indices(grid)
    rates = tariff.demand_rate_table()
    entries = []
    for p, name in enumerate(cal.period_names):
        present = [s for s in range(len(cal.seasons)) if ((indices == p) & (seasons == s)).any()]
        for s in present:
            rate = float(rates[p, s])
            members = (indices == p) & (seasons == s)
            if rate != 0.0:
                members.setflags(write=False)
                label = name if len(present) == 1 else f"{name}@{cal.season_names[s]}"
                entries.append(DemandPeriod(label, members, rate))
    if tariff.daily_demand_rate:
        local = grid.index.tz_convert(tariff.calendar.zone)
        days = np.asarray(local.normalize().date)
        for day in dict.fromkeys(days):
            members = days == day
            members.setflags(write=False)
            entries.append(DemandPeriod(f"daily_{day.isoformat()}", members, tariff.daily_demand_rate))
    return DemandPeriodSet(tuple(entries))


@dataclass(frozen=True)
class Eligibility:
    eligible: bool
    reason: str

    def __bool__(self):
        return self.eligible


def _at_least(value: float, threshold: float) -> bool:
    # "at least" is inclusive; absorb round-off in ratios like 22.09 / 220.9
    return value >= threshold or math.isclose(value, threshold, rel_tol=1e-12)


def check_eligibility(
    option: str,
    annual_pv_energy_kwh: float = 0.0,
    annual_consumption_kwh: float = 0.0,
    bes_power_kw: float = 0.0,
    max_annual_demand_kw: float = 0.0,
) -> Eligibility:
    """Option R needs PV covering >= 15% of annual consumption; Option S needs
    battery power >= 10% of the maximum annual demand."""
    for label, v in (
        ("annual_pv_energy_kwh", annual_pv_energy_kwh),
        ("annual_consumption_kwh", annual_consumption_kwh),
        ("bes_power_kw", bes_power_kw),
        ("max_annual_demand_kw", max_annual_demand_kw),
    ):
        if v < 0 or not math.isfinite(v):
            raise ValueError(f"{label} must be a finite value >= 0")
    if option == BASE:
        return Eligibility(True, "base TOU rates have no eligibility requirement")
    if option == OPTION_R:
        if annual_consumption_kwh <= 0:
            raise ValueError("Option R check needs annual_consumption_kwh > 0")
        share = annual_pv_energy_kwh / annual_consumption_kwh
        ok = _at_least(share, OPTION_R_PV_SHARE)
        return Eligibility(ok, f"PV supplies {share:.1%} of annual energy (needs >= 15%)")
    if option == OPTION_S:
        if max_annual_demand_kw <= 0:
            return Eligibility(bes_power_kw > 0, "no demand recorded")
        share = bes_power_kw / max_annual_demand_kw
        ok = _at_least(share, OPTION_S_POWER_SHARE)
        return Eligibility(ok, f"battery power is {share:.1%} of maximum demand (needs >= 10%)")
    raise ValueError(f"unknown tariff option {option!r}")


# -- TOML ----------------------------------------------------------------------


def tariff_from_dict(doc: dict) -> TariffSchedule:
    try:
        seasons = tuple(
            Season(name, spec["start"], spec["end"]) for name, spec in doc["seasons"].items()
        )
        periods = []
        energy, demand = {}, {}
        for name, spec in doc["periods"].items():
            windows = tuple(
                Window(tuple(w["seasons"]), tuple(w["days"]), w["start"], w["end"])
                for w in spec["windows"]
            )
            periods.append((name, windows))
            energy[name] = spec["energy_rate"]
            if "demand_rate" in spec:
                demand[name] = spec["demand_rate"]
        calendar = TouCalendar(
            timezone=doc["timezone"],
            seasons=seasons,
            periods=tuple(periods),
            holidays=tuple(_as_date(d) for d in doc.get("holidays", [])),
        )
        return TariffSchedule(
            name=doc["name"],
            calendar=calendar,
            energy_rates=energy,
            max_demand_rate=float(doc.get("max_demand_rate", 0.0)),
            period_demand_rates=demand,
            daily_demand_rate=None if "daily_demand_rate" not in doc else float(doc["daily_demand_rate"]),
            non_bypassable_charge=float(doc.get("non_bypassable_charge", 0.0)),
            option=doc.get("option", BASE),
            description=doc.get("description", ""),
        )
    except KeyError as exc:
        raise TariffError(f"missing key {exc.args[0]!r}") from None


def _as_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise TariffError(f"bad holiday date {value!r}") from None


def tariff_to_dict(tariff: TariffSchedule) -> dict:
    cal = tariff.calendar
    doc = {
        "name": tariff.name,
        "option": tariff.option,
        "description": tariff.description,
        "timezone": cal.timezone,
        "non_bypassable_charge": tariff.non_bypassable_charge,
        "max_demand_rate": tariff.max_demand_rate,
    }
    if tariff.daily_demand_rate is not None:
        doc["daily_demand_rate"] = tariff.daily_demand_rate
    doc["holidays"] = list(cal.holidays)
    doc["seasons"] = {s.name: {"start": s.start, "end": s.end} for s in cal.seasons}
    periods = {}
    for name, windows in cal.periods:
        spec = {"energy_rate": tariff.energy_rates[name]}
        if name in tariff.period_demand_rates:
            spec["demand_rate"] = tariff.period_demand_rates[name]
        spec["windows"] = [
            {"seasons": list(w.seasons), "days": list(w.day_classes), "start": w.start, "end": w.end}
            for w in windows
        ]
        periods[name] = spec
    doc["periods"] = periods
    return doc


def parse_tariff(text: str) -> TariffSchedule:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise TariffError(f"TOML syntax error: {exc}") from None
    return tariff_from_dict(doc)


def dump_tariff(tariff: TariffSchedule) -> str:
    return tomli_w.dumps(tariff_to_dict(tariff))


def load_tariff(path) -> TariffSchedule:
    path = Path(path)
    try:
        return parse_tariff(path.read_text())
    except TariffError as exc:
        raise TariffError(f"{path}: {exc}") from None


def save_tariff(tariff: TariffSchedule, path) -> None:
    Path(path).write_text(dump_tariff(tariff))


def coverage_report(tariff: TariffSchedule, year: int) -> dict[str, int]:
    """Minutes per period over ``year``; raises if any minute is uncovered."""
    grid = TimeGrid.for_year(year, tariff.calendar.timezone, 1)
    counts = np.bincount(tariff.calendar.period_indices(grid), minlength=len(tariff.calendar.periods))
    return dict(zip(tariff.calendar.period_names, counts.tolist()))
