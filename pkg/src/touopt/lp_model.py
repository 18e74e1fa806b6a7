"""Monthly bill-minimization LP for a site with PV and a battery.

Decision variables per interval ``t``: net demand ``dnet[t]`` (free), grid
imports ``dpos[t] >= 0``, state of charge ``soc[t]``, charging ``pcha[t]`` and
discharging ``pdis[t]``. Scalars: the monthly maximum demand ``dmax`` and one
``dtou[label]`` per demand-charge period.

Row names: ``maxdem[t]``, ``perdem[label][t]``, ``import[t]``, ``soc[t]``,
``socend``, ``chahead[t]``, ``disavail[t]``, ``power[t]``, ``noexport[t]``,
``netdef[t]``.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass, field

import numpy as np

from . import billing
from .bes import BatteryDispatch, BatterySpec, validate_dispatch
from .profiles import ProfileError, PvUnitProfile, SiteProfile, TimeGrid, scale_pv
from .solver.problem import (
    EQ,
    GE,
    LE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    LpProblem,
    RawSolution,
    build_problem,
)
from .tariff import (
    DemandPeriodSet,
    TariffSchedule,
    demand_periods_for_month,
    energy_rate_series,
    nem_sell_rate_series,
)

__all__ = [
    "LpProblem",
    "MonthlyInstance",
    "SolutionBundle",
    "assemble_lp",
    "build_instance",
    "extract_solution",
    "idle_start",
    "solve_instance",
]

EXTRACT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MonthlyInstance:
    """Everything one monthly LP needs, aligned to ``grid``."""

    grid: TimeGrid
    site: SiteProfile  # base demand and (already scaled) PV for the month
    spec: BatterySpec
    er: np.ndarray
    nsr: np.ndarray
    dr_max: float
    demand_periods: DemandPeriodSet
    tariff_name: str = ""

    def __post_init__(self):
        n = self.grid.count
        if self.site.grid.count != n:
            raise ValueError("site profile is not aligned to the instance grid")
        for name in ("er", "nsr"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,) or not np.isfinite(arr).all():
                raise ValueError(f"{name} must be {n} finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        # either would make the LP unbounded
        if (self.nsr > self.er).any():
            raise ValueError("nsr may not exceed er")
        for p in self.demand_periods:
            if p.members.shape != (n,):
                raise ValueError(f"demand period {p.label} is not aligned to the grid")
            if not (np.isfinite(p.rate) and p.rate >= 0):
                raise ValueError(f"demand period {p.label} needs a finite rate >= 0")
        if not (np.isfinite(self.dr_max) and self.dr_max >= 0):
            raise ValueError("dr_max must be finite and >= 0")

    @property
    def base_kw(self) -> np.ndarray:
        return self.site.base_demand_kw

    @property
    def pv_kw(self) -> np.ndarray:
        return self.site.pv_generation_kw

    @property
    def step_hours(self) -> float:
        return self.grid.step_hours

    def scaled(self, factor: float) -> "MonthlyInstance":
        """Instance with every rate multiplied by ``factor``."""
        return MonthlyInstance(
            self.grid,
            self.site,
            self.spec,
            self.er * factor,
            self.nsr * factor,
            self.dr_max * factor,
            self.demand_periods.scaled(factor),
            self.tariff_name,
        )


def build_instance(
    site: SiteProfile,
    tariff: TariffSchedule,
    spec: BatterySpec,
    year: int,
    month: int,
    pv_capacity_kw: float | None = None,
    pv_unit: PvUnitProfile | None = None,
) -> MonthlyInstance:
    """Slice ``site`` to one calendar month and attach the tariff's rate series.

    With ``pv_unit`` given, PV output is ``pv_unit`` scaled to ``pv_capacity_kw``;
    otherwise the site's own PV series is used.
    """
    if not 1 <= month <= 12:
        raise ValueError(f"month must be 1..12, got {month}")
    grid = TimeGrid.for_month(year, month, tariff.calendar.zone, site.grid.step_minutes)
    try:
        month_site = site.slice(grid)
    except ProfileError as exc:
        raise ProfileError(f"site profile does not cover {calendar.month_name[month]} {year}: {exc}") from None
    if pv_unit is not None:
        capacity = 0.0 if pv_capacity_kw is None else pv_capacity_kw
        pv = scale_pv(pv_unit.slice(grid), capacity)
        month_site = SiteProfile(grid, month_site.base_demand_kw, pv)
    elif pv_capacity_kw is not None:
        raise ValueError("pv_capacity_kw needs a pv_unit profile to scale")
    return MonthlyInstance(
        grid=grid,
        site=month_site,
        spec=spec,
        er=energy_rate_series(tariff, grid),
        nsr=nem_sell_rate_series(tariff, grid),
        dr_max=tariff.max_demand_rate,
        demand_periods=demand_periods_for_month(tariff, grid),
        tariff_name=tariff.name,
    )


@dataclass(frozen=True)
class _Layout:
    """Column offsets of the variable blocks."""

    T: int
    labels: tuple[str, ...]

    @property
    def dnet(self):
        return 0

    @property
    def dpos(self):
        return self.T

    @property
    def soc(self):
        return 2 * self.T

    @property
    def pcha(self):
        return 3 * self.T

    @property
    def pdis(self):
        return 4 * self.T

    @property
    def dmax(self):
        return 5 * self.T

    def dtou(self, k: int) -> int:
        return 5 * self.T + 1 + k

    @property
    def size(self):
        return 5 * self.T + 1 + len(self.labels)


def assemble_lp(inst: MonthlyInstance) -> LpProblem:
    """Build the sparse LP for ``inst``."""
    T = inst.grid.count
    h = inst.step_hours
    spec = inst.spec
    eta = spec.round_trip_efficiency
    L = _Layout(T, inst.demand_periods.labels)
    ts = np.arange(T)
    base = inst.base_kw
    pv = inst.pv_kw

    names = (
        [f"dnet[{t}]" for t in ts]
        + [f"dpos[{t}]" for t in ts]
        + [f"soc[{t}]" for t in ts]
        + [f"pcha[{t}]" for t in ts]
        + [f"pdis[{t}]" for t in ts]
        + ["dmax"]
        + [f"dtou[{label}]" for label in L.labels]
    )
    inf = np.inf
    lower = np.concatenate(
        [np.full(T, -inf), np.zeros(T), np.full(T, spec.soc_min_kwh), np.zeros(2 * T), np.zeros(1 + len(L.labels))]
    )
    upper = np.concatenate([np.full(T, inf), np.full(T, inf), np.full(T, spec.soc_max_kwh), np.full(2 * T + 1 + len(L.labels), inf)])
    cost = np.zeros(L.size)
    # export is priced through dnet - dpos, so dnet carries NSR and dpos carries ER - NSR
    cost[L.dnet : L.dnet + T] = h * inst.nsr
    cost[L.dpos : L.dpos + T] = h * (inst.er - inst.nsr)
    cost[L.dmax] = inst.dr_max
    for k, p in enumerate(inst.demand_periods):
        cost[L.dtou(k)] = p.rate

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    senses: list[str] = []
    rhs: list[np.ndarray] = []
    row_names: list[str] = []
    nrow = 0

    def block(count, entries, sense, b, labels):
        """``entries`` is a list of (column array, coefficient array) per row block."""
        nonlocal nrow
        r = np.arange(nrow, nrow + count)
        for c, v in entries:
            rows.append(r)
            cols.append(np.broadcast_to(c, (count,)))
            vals.append(np.broadcast_to(np.asarray(v, dtype=float), (count,)))
        senses.extend([sense] * count)
        rhs.append(np.broadcast_to(np.asarray(b, dtype=float), (count,)))
        row_names.extend(labels)
        nrow += count

    # dnet[t] <= dmax
    block(T, [(L.dnet + ts, 1.0), (L.dmax, -1.0)], LE, 0.0, [f"maxdem[{t}]" for t in ts])
    # dnet[t] <= dtou[p] for t in p
    for k, p in enumerate(inst.demand_periods):
        members = np.flatnonzero(p.members)
        block(
            members.size,
            [(L.dnet + members, 1.0), (L.dtou(k), -1.0)],
            LE,
            0.0,
            [f"perdem[{p.label}][{t}]" for t in members],
        )
    # dpos[t] >= dnet[t]  (dpos >= 0 is a bound)
    block(T, [(L.dpos + ts, 1.0), (L.dnet + ts, -1.0)], GE, 0.0, [f"import[{t}]" for t in ts])
    # soc[t] - soc[t-1] - h*eta*pcha[t] + h*pdis[t] = 0, with soc[-1] = J_init moved to the rhs
    soc_rhs = np.zeros(T)
    soc_rhs[0] = spec.soc_init_kwh
    t1 = ts[1:]
    rows.append(nrow + t1)
    cols.append(L.soc + t1 - 1)
    vals.append(np.full(T - 1, -1.0))
    block(T, [(L.soc + ts, 1.0), (L.pcha + ts, -h * eta), (L.pdis + ts, h)], EQ, soc_rhs, [f"soc[{t}]" for t in ts])
    # soc after the last interval returns to J_init
    block(1, [(np.array([L.soc + T - 1]), 1.0)], EQ, spec.soc_init_kwh, ["socend"])
    # h*eta*pcha[t] + soc[t-1] <= BER
    head_rhs = np.full(T, float(spec.energy_rating_kwh))
    head_rhs[0] -= spec.soc_init_kwh
    rows.append(nrow + t1)
    cols.append(L.soc + t1 - 1)
    vals.append(np.ones(T - 1))
    block(T, [(L.pcha + ts, h * eta)], LE, head_rhs, [f"chahead[{t}]" for t in ts])
    # h*pdis[t] - soc[t-1] <= 0
    avail_rhs = np.zeros(T)
    avail_rhs[0] = spec.soc_init_kwh
    rows.append(nrow + t1)
    cols.append(L.soc + t1 - 1)
    vals.append(np.full(T - 1, -1.0))
    block(T, [(L.pdis + ts, h)], LE, avail_rhs, [f"disavail[{t}]" for t in ts])
    # pcha + pdis <= BPR
    block(T, [(L.pcha + ts, 1.0), (L.pdis + ts, 1.0)], LE, float(spec.power_rating_kw), [f"power[{t}]" for t in ts])
    # pcha - pdis >= -D_base
    block(T, [(L.pcha + ts, 1.0), (L.pdis + ts, -1.0)], GE, -base, [f"noexport[{t}]" for t in ts])
    # dnet - pcha + pdis = D_base - P_pv
    block(
        T,
        [(L.dnet + ts, 1.0), (L.pcha + ts, -1.0), (L.pdis + ts, 1.0)],
        EQ,
        base - pv,
        [f"netdef[{t}]" for t in ts],
    )

    return build_problem(
        names,
        lower,
        upper,
        cost,
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
        senses,
        np.concatenate(rhs),
        row_names,
        name=f"{inst.tariff_name or 'bill'}_{inst.grid.start:%Y_%m}",
    )


def idle_start(inst: MonthlyInstance) -> np.ndarray:
    """Primal point of the idle battery; always feasible."""
    T = inst.grid.count
    net = inst.base_kw - inst.pv_kw
    dtou = [max(float(net[p.members].max(initial=-np.inf)), 0.0) for p in inst.demand_periods]
    return np.concatenate(
        [
            net,
            np.maximum(net, 0.0),
            np.full(T, float(inst.spec.soc_init_kwh)),
            np.zeros(2 * T),
            [max(float(net.max()), 0.0)],
            dtou,
        ]
    )


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    status: str
    objective_value: float | None = None
    dispatch: BatteryDispatch | None = None
    net_demand_kw: np.ndarray | None = None
    import_kw: np.ndarray | None = None
    d_max_kw: float | None = None
    d_tou_kw: dict = field(default_factory=dict)
    bill: "billing.BillBreakdown | None" = None
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def extract_solution(inst: MonthlyInstance, lp: LpProblem, raw: RawSolution) -> SolutionBundle:
    """Map solver output back to the model and cross-check it against the bill."""
    if raw.status != OPTIMAL:
        return SolutionBundle(raw.status, iterations=raw.iterations, message=raw.message)
    T = inst.grid.count
    L = _Layout(T, inst.demand_periods.labels)
    x = np.asarray(raw.x, dtype=float)
    if x.shape != (lp.num_vars,):
        return SolutionBundle(NUMERICAL_FAILURE, message="solution vector has the wrong length")

    def failure(msg):
        return SolutionBundle(NUMERICAL_FAILURE, raw.objective, iterations=raw.iterations, message=msg)

    net = x[L.dnet : L.dnet + T]
    imports = x[L.dpos : L.dpos + T]
    soc = x[L.soc : L.soc + T]
    cha = x[L.pcha : L.pcha + T]
    dis = x[L.pdis : L.pdis + T]
    dispatch = BatteryDispatch(inst.grid, cha, dis, soc)

    identity = np.abs(net - (inst.base_kw - inst.pv_kw + cha - dis))
    if identity.max() > EXTRACT_TOL:
        return failure(f"net-demand identity off by {identity.max():.3g} kW")
    violations = validate_dispatch(inst.spec, dispatch, inst.base_kw, EXTRACT_TOL)
    if violations:
        return failure("dispatch fails validation: " + "; ".join(map(str, violations[:5])))
    dmax = float(x[L.dmax])
    if inst.dr_max > 0 and abs(dmax - max(float(net.max()), 0.0)) > EXTRACT_TOL:
        return failure(f"dmax {dmax} is not the peak net demand {net.max()}")
    dtou = {}
    for k, p in enumerate(inst.demand_periods):
        value = float(x[L.dtou(k)])
        peak = max(float(net[p.members].max()), 0.0)
        if p.rate > 0 and abs(value - peak) > EXTRACT_TOL:
            return failure(f"dtou[{p.label}] {value} is not the period peak {peak}")
        dtou[p.label] = value

    bill = billing.bill_of_dispatch(inst, dispatch, tolerance=EXTRACT_TOL)
    objective = float(raw.objective)
    if abs(bill.total - objective) > EXTRACT_TOL * max(1.0, abs(objective)):
        return failure(f"objective {objective} disagrees with recomputed bill {bill.total}")
    return SolutionBundle(
        OPTIMAL,
        objective,
        dispatch,
        net.copy(),
        imports.copy(),
        dmax,
        dtou,
        bill,
        raw.iterations,
        raw.message,
    )


def solve_instance(inst: MonthlyInstance, config=None) -> SolutionBundle:
    """Assemble, solve and extract in one call."""
    from .solver import SolverConfig, solve

    lp = assemble_lp(inst)
    raw = solve(lp, config or SolverConfig(), start=idle_start(inst))
    return extract_solution(inst, lp, raw)
