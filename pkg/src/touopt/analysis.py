"""Annual bills, asset-size sweeps and battery value added.

Each calendar month is solved on its own, with the battery starting and
ending at its initial charge, and the annual bill is the sum of the twelve
monthly optima. Jobs are (tariff, sweep value, month) triples; they may run
in a process pool, and results are always assembled in job order.
"""

from __future__ import annotations

import calendar
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bes import BatteryDispatch, BatterySpec, validate_dispatch
from .billing import BillBreakdown
from .lp_model import build_instance, solve_instance
from .profiles import PvUnitProfile, SiteProfile
from .solver import SolverConfig
from .tariff import TariffSchedule

PV_CAPACITY = "pv_capacity"
PV_CAPACITY_NO_BES = "pv_capacity_no_bes"
BES_POWER_2H = "bes_power@2h"
BES_POWER_4H = "bes_power@4h"
PARAMETERS = (PV_CAPACITY, PV_CAPACITY_NO_BES, BES_POWER_2H, BES_POWER_4H)
DURATIONS = {BES_POWER_2H: 2.0, BES_POWER_4H: 4.0}

DIFFERENCE = "difference"
RATIO = "ratio"
RELATIVE_MODES = (DIFFERENCE, RATIO)

SIMULTANEOUS_TOL = 1e-6


class AnalysisError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MonthResult:
    month: int
    bill: BillBreakdown
    dispatch: BatteryDispatch
    base_kw: np.ndarray
    pv_kw: np.ndarray
    net_kw: np.ndarray
    import_kw: np.ndarray
    cycles: float
    simultaneous_intervals: int

    @property
    def total(self) -> float:
        return self.bill.total


@dataclass(frozen=True, eq=False)
class AnnualResult:
    tariff: str
    spec: BatterySpec
    pv_capacity_kw: float
    months: tuple[MonthResult, ...]

    @property
    def total(self) -> float:
        return sum(m.bill.total for m in self.months)

    @property
    def cycles(self) -> float:
        return sum(m.cycles for m in self.months)


@dataclass(frozen=True)
class _Job:
    site: SiteProfile
    tariff: TariffSchedule
    spec: BatterySpec
    year: int
    month: int
    pv_capacity_kw: float
    pv_unit: PvUnitProfile | None
    config: SolverConfig


def _solve_month(job: _Job) -> MonthResult:
    inst = build_instance(
        job.site, job.tariff, job.spec, job.year, job.month, job.pv_capacity_kw if job.pv_unit else None, job.pv_unit
    )
    sol = solve_instance(inst, job.config)
    label = f"{job.tariff.name}, {calendar.month_name[job.month]} {job.year}"
    if not sol.ok:
        raise AnalysisError(f"{label}: solver status {sol.status}: {sol.message}")
    bad = validate_dispatch(job.spec, sol.dispatch, inst.base_kw, 1e-6)
    if bad:
        raise AnalysisError(f"{label}: dispatch fails validation: {bad[0]}")
    d = sol.dispatch
    both = (d.charge_kw > SIMULTANEOUS_TOL) & (d.discharge_kw > SIMULTANEOUS_TOL)
    return MonthResult(
        job.month,
        sol.bill,
        d,
        inst.base_kw,
        inst.pv_kw,
        sol.net_demand_kw,
        sol.import_kw,
        d.full_cycles(job.spec),
        int(both.sum()),
    )


def _run(jobs: list[_Job], workers: int) -> list[MonthResult]:
    if workers <= 1 or len(jobs) <= 1:
        return [_solve_month(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_month, jobs, chunksize=1))


def _site_year(site: SiteProfile) -> int:
    return site.grid.start.year


def _jobs(site, tariff, spec, pv_capacity_kw, pv_unit, config, year) -> list[_Job]:
    return [_Job(site, tariff, spec, year, m, pv_capacity_kw, pv_unit, config) for m in range(1, 13)]


def annual_bill(
    site: SiteProfile,
    tariff: TariffSchedule,
    spec: BatterySpec,
    pv_capacity_kw: float = 0.0,
    pv_unit: PvUnitProfile | None = None,
    config: SolverConfig | None = None,
    workers: int = 1,
    year: int | None = None,
) -> AnnualResult:
    """Twelve independent monthly optima.

    With ``pv_unit`` the PV series is ``pv_unit`` scaled to ``pv_capacity_kw``;
    without it the site's own PV series is used as is.
    """
    config = config or SolverConfig()
    year = _site_year(site) if year is None else year
    months = _run(_jobs(site, tariff, spec, pv_capacity_kw, pv_unit, config, year), workers)
    return AnnualResult(tariff.name, spec, pv_capacity_kw, tuple(months))


@dataclass(frozen=True, eq=False)
class SweepResult:
    tariff: str
    parameter: str
    values: tuple[float, ...]
    results: tuple[AnnualResult, ...]

    def __post_init__(self):
        if len(self.values) != len(self.results):
            raise ValueError("one annual result per sweep value required")

    @property
    def annual_totals(self) -> np.ndarray:
        return np.array([r.total for r in self.results])

    @property
    def monthly(self) -> list[list[BillBreakdown]]:
        return [[m.bill for m in r.months] for r in self.results]

    @property
    def cycles(self) -> np.ndarray:
        """Full-equivalent cycles per (value, month)."""
        return np.array([[m.cycles for m in r.months] for r in self.results])


def point_assets(
    parameter: str, value: float, spec: BatterySpec, pv_capacity_kw: float
) -> tuple[BatterySpec, float]:
    """Battery and PV capacity at one sweep point."""
    if parameter == PV_CAPACITY:
        return spec, value
    if parameter == PV_CAPACITY_NO_BES:
        return spec.resized(0.0, 0.0), value
    if parameter in DURATIONS:
        return spec.resized(value, DURATIONS[parameter] * value), pv_capacity_kw
    raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(PARAMETERS)}")


def _check_values(values) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if len(values) < 2:
        raise ValueError("a sweep needs at least 2 values")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be sorted ascending")
    if min(values) < 0 or not all(np.isfinite(values)):
        raise ValueError("sweep values must be finite and >= 0")
    return values


def sweep(
    site: SiteProfile,
    tariffs: list[TariffSchedule],
    spec: BatterySpec,
    parameter: str,
    values,
    pv_capacity_kw: float = 0.0,
    pv_unit: PvUnitProfile | None = None,
    config: SolverConfig | None = None,
    workers: int = 1,
    year: int | None = None,
) -> dict[str, SweepResult]:
    """Annual bill at every sweep value, for every tariff.

    ``pv_capacity`` keeps ``spec`` fixed, ``pv_capacity_no_bes`` drops the
    battery, ``bes_power@2h``/``bes_power@4h`` set the power rating with the
    energy rating at 2 or 4 times it while PV stays at ``pv_capacity_kw``.
    """
    if parameter not in PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(PARAMETERS)}")
    if parameter in (PV_CAPACITY, PV_CAPACITY_NO_BES) and pv_unit is None:
        raise ValueError("PV sweeps need a PV unit profile")
    values = _check_values(values)
    config = config or SolverConfig()
    year = _site_year(site) if year is None else year
    jobs = []
    points = [point_assets(parameter, v, spec, pv_capacity_kw) for v in values]
    for tariff in tariffs:
        for point_spec, pv in points:
            jobs += _jobs(site, tariff, point_spec, pv, pv_unit, config, year)
    months = _run(jobs, workers)
    out = {}
    k = 0
    for tariff in tariffs:
        annual = []
        for point_spec, pv in points:
            annual.append(AnnualResult(tariff.name, point_spec, pv, tuple(months[k : k + 12])))
            k += 12
        out[tariff.name] = SweepResult(tariff.name, parameter, values, tuple(annual))
    return out


def relative_to(series: dict[str, np.ndarray], baseline: str, mode: str = DIFFERENCE) -> dict[str, np.ndarray]:
    """Each tariff's series against the baseline tariff's, point by point."""
    if baseline not in series:
        raise ValueError(f"baseline tariff {baseline!r} is not among {sorted(series)}")
    if mode not in RELATIVE_MODES:
        raise ValueError(f"relative mode must be one of {RELATIVE_MODES}")
    ref = np.asarray(series[baseline], dtype=float)
    if mode == DIFFERENCE:
        return {name: np.asarray(v, dtype=float) - ref for name, v in series.items()}
    with np.errstate(divide="ignore", invalid="ignore"):
        return {name: np.asarray(v, dtype=float) / ref for name, v in series.items()}


@dataclass(frozen=True, eq=False)
class BvaResult:
    tariff: str
    without_bes: AnnualResult
    with_bes: AnnualResult

    @property
    def value(self) -> float:
        return self.without_bes.total - self.with_bes.total


def battery_value_added(
    site: SiteProfile,
    tariff: TariffSchedule,
    spec: BatterySpec,
    pv_capacity_kw: float = 0.0,
    pv_unit: PvUnitProfile | None = None,
    config: SolverConfig | None = None,
    workers: int = 1,
    year: int | None = None,
) -> BvaResult:
    """Annual bill without the battery minus the annual bill with it, same PV."""
    without = annual_bill(site, tariff, spec.resized(0.0, 0.0), pv_capacity_kw, pv_unit, config, workers, year)
    if spec.is_empty:
        with_bes = AnnualResult(tariff.name, spec, pv_capacity_kw, without.months)
    else:
        with_bes = annual_bill(site, tariff, spec, pv_capacity_kw, pv_unit, config, workers, year)
    return BvaResult(tariff.name, without, with_bes)


@dataclass(frozen=True, eq=False)
class BvaSweep:
    tariff: str
    duration_hours: float
    values: tuple[float, ...]
    without_bes: AnnualResult
    with_bes: tuple[AnnualResult, ...]

    @property
    def bva(self) -> np.ndarray:
        return np.array([self.without_bes.total - r.total for r in self.with_bes])


def bva_sweep(
    site: SiteProfile,
    tariffs: list[TariffSchedule],
    spec: BatterySpec,
    power_values,
    duration_hours: float = 2.0,
    pv_capacity_kw: float = 0.0,
    pv_unit: PvUnitProfile | None = None,
    config: SolverConfig | None = None,
    workers: int = 1,
    year: int | None = None,
) -> dict[str, BvaSweep]:
    """Battery value added over a grid of power ratings at a fixed duration."""
    values = _check_values(power_values)
    if not duration_hours > 0:
        raise ValueError("duration_hours must be > 0")
    config = config or SolverConfig()
    year = _site_year(site) if year is None else year
    empty = spec.resized(0.0, 0.0)
    specs = [spec.resized(v, duration_hours * v) for v in values]
    jobs = []
    for tariff in tariffs:
        for s in [empty] + [s for s in specs if not s.is_empty]:
            jobs += _jobs(site, tariff, s, pv_capacity_kw, pv_unit, config, year)
    months = _run(jobs, workers)
    out = {}
    k = 0
    for tariff in tariffs:
        without = AnnualResult(tariff.name, empty, pv_capacity_kw, tuple(months[k : k + 12]))
        k += 12
        with_bes = []
        for s in specs:
            if s.is_empty:
                with_bes.append(AnnualResult(tariff.name, s, pv_capacity_kw, without.months))
            else:
                with_bes.append(AnnualResult(tariff.name, s, pv_capacity_kw, tuple(months[k : k + 12])))
                k += 12
        out[tariff.name] = BvaSweep(tariff.name, duration_hours, values, without, tuple(with_bes))
    return out


# -- CSV ---------------------------------------------------------------------

BILL_COLUMNS = [
    "max_demand_charge",
    "tou_demand_charge",
    "energy_charge",
    "nem_revenue",
    "total",
    "total_display",
]
DISPATCH_COLUMNS = [
    "timestamp",
    "base_kw",
    "pv_kw",
    "charge_kw",
    "discharge_kw",
    "soc_kwh",
    "net_kw",
    "import_kw",
]


def fmt(value: float) -> str:
    """Full-precision float text that round-trips."""
    return repr(float(value))


def money(value: float) -> str:
    return f"{float(value):.2f}"


def _bill_cells(bill: BillBreakdown) -> list[str]:
    tou = 0.0
    for v in bill.tou_demand_charges.values():
        tou += v
    return [
        fmt(bill.max_demand_charge),
        fmt(tou),
        fmt(bill.energy_charge),
        fmt(bill.nem_revenue),
        fmt(bill.total),
        money(bill.total),
    ]


def _writer(path):
    handle = open(path, "w", newline="")
    return handle, csv.writer(handle, lineterminator="\n")


def write_monthly_csv(path, annual: AnnualResult) -> None:
    """One row per month plus an ``annual`` row."""
    handle, w = _writer(path)
    with handle:
        w.writerow(["tariff", "month", *BILL_COLUMNS, "cycles", "simultaneous_intervals"])
        for m in annual.months:
            w.writerow([annual.tariff, m.month, *_bill_cells(m.bill), fmt(m.cycles), m.simultaneous_intervals])
        simultaneous = sum(m.simultaneous_intervals for m in annual.months)
        blank = [""] * 4
        w.writerow([annual.tariff, "annual", *blank, fmt(annual.total), money(annual.total), fmt(annual.cycles), simultaneous])


def write_dispatch_csv(path, annual: AnnualResult) -> None:
    handle, w = _writer(path)
    with handle:
        w.writerow(DISPATCH_COLUMNS)
        for m in annual.months:
            d = m.dispatch
            index = d.grid.index
            for t in range(d.grid.count):
                w.writerow(
                    [
                        index[t].isoformat(),
                        fmt(m.base_kw[t]),
                        fmt(m.pv_kw[t]),
                        fmt(d.charge_kw[t]),
                        fmt(d.discharge_kw[t]),
                        fmt(d.soc_kwh[t]),
                        fmt(m.net_kw[t]),
                        fmt(m.import_kw[t]),
                    ]
                )


def _asset_cells(annual: AnnualResult) -> list[str]:
    return [fmt(annual.spec.power_rating_kw), fmt(annual.spec.energy_rating_kwh), fmt(annual.pv_capacity_kw)]


def write_sweep_monthly_csv(path, results: dict[str, SweepResult]) -> None:
    """One row per (tariff, sweep value, month)."""
    handle, w = _writer(path)
    with handle:
        w.writerow(["tariff", "parameter", "value", "bpr_kw", "ber_kwh", "pv_kw", "month", *BILL_COLUMNS, "cycles"])
        for name, res in results.items():
            for value, annual in zip(res.values, res.results):
                for m in annual.months:
                    w.writerow(
                        [name, res.parameter, fmt(value), *_asset_cells(annual), m.month, *_bill_cells(m.bill), fmt(m.cycles)]
                    )


def write_sweep_summary_csv(path, res: SweepResult, relative: np.ndarray | None = None) -> None:
    """One row per sweep value for one tariff."""
    handle, w = _writer(path)
    with handle:
        header = ["tariff", "parameter", "value", "bpr_kw", "ber_kwh", "pv_kw", "annual_total", "annual_total_display", "cycles"]
        if relative is not None:
            header += ["relative", "relative_display"]
        w.writerow(header)
        for i, (value, annual) in enumerate(zip(res.values, res.results)):
            row = [res.tariff, res.parameter, fmt(value), *_asset_cells(annual), fmt(annual.total), money(annual.total), fmt(annual.cycles)]
            if relative is not None:
                row += [fmt(relative[i]), f"{relative[i]:.4f}"]
            w.writerow(row)


def write_wide_csv(path, parameter: str, values, columns: dict[str, np.ndarray]) -> None:
    """Plot-ready table: swept value in the first column, one column per tariff."""
    handle, w = _writer(path)
    with handle:
        names = list(columns)
        w.writerow([parameter, *names])
        for i, value in enumerate(values):
            w.writerow([fmt(value), *(fmt(columns[n][i]) for n in names)])


def write_bva_csv(path, res: BvaSweep, relative: np.ndarray | None = None) -> None:
    handle, w = _writer(path)
    with handle:
        header = ["tariff", "bpr_kw", "ber_kwh", "pv_kw", "bill_without_bes", "bill_with_bes", "bva", "bva_display", "cycles"]
        if relative is not None:
            header += ["bva_relative", "bva_relative_display"]
        w.writerow(header)
        bva = res.bva
        for i, annual in enumerate(res.with_bes):
            row = [
                res.tariff,
                *_asset_cells(annual)[:2],
                fmt(annual.pv_capacity_kw),
                fmt(res.without_bes.total),
                fmt(annual.total),
                fmt(bva[i]),
                money(bva[i]),
                fmt(annual.cycles),
            ]
            if relative is not None:
                row += [fmt(relative[i]), money(relative[i])]
            w.writerow(row)


def output_path(outdir, *parts: str) -> Path:
    safe = "_".join(p.replace("@", "_").replace("/", "_") for p in parts)
    return Path(outdir) / f"{safe}.csv"
