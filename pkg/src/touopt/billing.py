"""Direct bill evaluation for a fixed dispatch and a brute-force dispatch optimizer.

The brute-force search is an independent check on the LP: it restricts the
battery to a uniform grid of net-power actions, never charges and discharges
in the same interval, and exhaustively searches the remaining sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .bes import BatteryDispatch, Violation, validate_dispatch

if TYPE_CHECKING:
    from .lp_model import MonthlyInstance

ENUMERATION_LIMIT = 10**7
ENUMERATION_MAX_COUNT = 12
DP_MAX_COUNT = 48
DP_MAX_STATES = 5_000_000
ORACLE_TOL = 1e-9
SOC_KEY = 1e-9


class InvalidDispatch(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        shown = "; ".join(map(str, violations[:5]))
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"dispatch violates battery constraints: {shown}{more}")


class OracleTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class BillBreakdown:
    """Monthly bill split into its components, in dollars.

    ``nem_revenue`` is the (non-positive) export credit as it enters the bill.
    """

    max_demand_charge: float
    tou_demand_charges: dict[str, float]
    energy_charge: float
    nem_revenue: float
    total: float = field(init=False)

    def __post_init__(self):
        total = self.max_demand_charge
        for value in self.tou_demand_charges.values():
            total += value
        total += self.energy_charge
        total += self.nem_revenue
        object.__setattr__(self, "total", float(total))

    @property
    def demand_charge(self) -> float:
        return self.max_demand_charge + sum(self.tou_demand_charges.values())

    def scaled(self, factor: float) -> "BillBreakdown":
        return BillBreakdown(
            self.max_demand_charge * factor,
            {k: v * factor for k, v in self.tou_demand_charges.items()},
            self.energy_charge * factor,
            self.nem_revenue * factor,
        )


def bill_of_net_demand(inst: "MonthlyInstance", net_kw) -> BillBreakdown:
    """Bill for a given net-demand series, negative values being exports."""
    net = np.asarray(net_kw, dtype=float)
    if net.shape != (inst.grid.count,):
        raise ValueError(f"net demand has {net.size} values, grid has {inst.grid.count}")
    h = inst.step_hours
    imports = np.maximum(net, 0.0)
    exports = net - imports
    tou = {}
    for p in inst.demand_periods:
        peak = max(float(net[p.members].max(initial=0.0)), 0.0)
        tou[p.label] = peak * p.rate
    return BillBreakdown(
        max_demand_charge=max(float(net.max(initial=0.0)), 0.0) * inst.dr_max,
        tou_demand_charges=tou,
        energy_charge=h * float(np.dot(imports, inst.er)),
        nem_revenue=h * float(np.dot(exports, inst.nsr)),
    )


def net_demand(inst: "MonthlyInstance", dispatch: BatteryDispatch) -> np.ndarray:
    return inst.base_kw - inst.pv_kw + dispatch.charge_kw - dispatch.discharge_kw


def bill_of_dispatch(inst: "MonthlyInstance", dispatch: BatteryDispatch, tolerance: float = 1e-6) -> BillBreakdown:
    """Bill of ``dispatch`` after checking it against every battery constraint."""
    if dispatch.grid.count != inst.grid.count:
        raise ValueError(f"dispatch has {dispatch.grid.count} intervals, instance has {inst.grid.count}")
    violations = validate_dispatch(inst.spec, dispatch, inst.base_kw, tolerance)
    if violations:
        raise InvalidDispatch(violations)
    return bill_of_net_demand(inst, net_demand(inst, dispatch))


@dataclass(frozen=True, eq=False)
class OracleResult:
    bill: BillBreakdown
    dispatch: BatteryDispatch
    mode: str
    states_explored: int

    @property
    def total(self) -> float:
        return self.bill.total


def brute_force_optimal(
    inst: "MonthlyInstance", power_levels: int, mode: str = "auto", boundary_actions: bool = True
) -> OracleResult:
    """Cheapest dispatch over a finite action set, found by exhaustive search.

    In every interval but the last the battery may take one of
    ``power_levels`` grid powers ``-BPR + 2*BPR*i/(power_levels-1)`` kW
    (negative discharges) or stay idle. With ``boundary_actions`` it may also
    charge exactly to ``soc_max`` or discharge exactly to ``soc_min``, which
    grid powers rarely hit. The final interval takes whatever power
    returns the battery to its starting charge, if that power is admissible.
    Charging and discharging never overlap.

    ``mode="enumerate"`` keeps every sequence; ``mode="dp"`` merges sequences
    that reach the same charge with the same running peaks and drops dominated
    ones, which finds the same optimum on longer horizons. Since every result
    is an admissible dispatch, the bill is an upper bound on the LP optimum,
    and it cannot increase when the grid is refined from ``n`` to ``2n - 1``
    levels.
    """
    if int(power_levels) != power_levels or power_levels < 2:
        raise ValueError("power_levels must be an integer >= 2")
    power_levels = int(power_levels)
    count = inst.grid.count
    branching = power_levels + 1 + (2 if boundary_actions else 0)
    small = count <= ENUMERATION_MAX_COUNT and branching ** (count - 1) <= ENUMERATION_LIMIT
    if mode == "auto":
        mode = "enumerate" if small else "dp"
    if mode == "enumerate":
        if not small:
            raise OracleTooLarge(
                f"enumeration needs count <= {ENUMERATION_MAX_COUNT} and at most {ENUMERATION_LIMIT:.0e} "
                f"sequences; got count {count} with {branching} actions per interval; use a smaller "
                "instance or mode='dp'"
            )
    elif mode == "dp":
        if count > DP_MAX_COUNT:
            raise OracleTooLarge(f"dp mode supports at most {DP_MAX_COUNT} intervals, got {count}; use a smaller instance")
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    return _search(inst, power_levels, boundary_actions, merge=(mode == "dp"), mode=mode)


def _search(inst: "MonthlyInstance", levels: int, boundary: bool, merge: bool, mode: str) -> OracleResult:
    spec = inst.spec
    T = inst.grid.count
    h = inst.step_hours
    eta = spec.round_trip_efficiency
    bpr = float(spec.power_rating_kw)
    ber = float(spec.energy_rating_kwh)
    j0 = float(spec.soc_init_kwh)
    jmin, jmax = float(spec.soc_min_kwh), float(spec.soc_max_kwh)
    base = inst.base_kw
    resid = base - inst.pv_kw
    periods = list(inst.demand_periods)
    rates = np.array([inst.dr_max] + [p.rate for p in periods])
    member = np.array([np.ones(T, bool)] + [p.members for p in periods])  # (1+P, T)
    grid_power = bpr * np.arange(-(levels - 1), levels, 2) / (levels - 1)
    grid_power = np.append(grid_power, 0.0)  # idle, absent from even-sized grids
    grid_cha = np.maximum(grid_power, 0.0)
    grid_dis = np.maximum(-grid_power, 0.0)

    soc = np.array([j0])
    maxima = np.full((1, len(rates)), -np.inf)
    cost = np.zeros(1)
    history: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []  # (parent, cha, dis) per step
    explored = 1

    def admissible(t, prev, cha, dis):
        new = prev + h * (eta * cha - dis)
        ok = (
            (cha <= bpr + ORACLE_TOL)
            & (dis <= bpr + ORACLE_TOL)
            & (h * eta * cha <= ber - prev + ORACLE_TOL)
            & (h * dis <= prev + ORACLE_TOL)
            & (dis <= base[t] + cha + ORACLE_TOL)
            & (new >= jmin - ORACLE_TOL)
            & (new <= jmax + ORACLE_TOL)
        )
        return ok, new

    def advance(t, cha, dis, old_max, old_cost):
        """Running maxima and cost after interval t."""
        net = resid[t] + cha - dis
        add = h * (inst.er[t] * np.maximum(net, 0.0) + inst.nsr[t] * np.minimum(net, 0.0))
        mx = old_max.copy()
        hit = member[:, t]
        mx[:, hit] = np.maximum(mx[:, hit], net[:, None])
        return mx, old_cost + add

    for t in range(T - 1):
        nstate = soc.size
        rep = np.repeat(np.arange(nstate), grid_power.size)
        cha = np.tile(grid_cha, nstate)
        dis = np.tile(grid_dis, nstate)
        if boundary:
            # charge to J_max or discharge to J_min in one step, when the rating allows
            ids = np.arange(nstate)
            fill = np.maximum((jmax - soc) / (h * eta), 0.0)
            empty = np.maximum((soc - jmin) / h, 0.0)
            nil = np.zeros(nstate)
            rep = np.concatenate([rep, ids, ids])
            cha = np.concatenate([cha, fill, nil])
            dis = np.concatenate([dis, nil, empty])
        ok, new_soc = admissible(t, soc[rep], cha, dis)
        rep, cha, dis, new_soc = rep[ok], cha[ok], dis[ok], new_soc[ok]
        maxima, cost = advance(t, cha, dis, maxima[rep], cost[rep])
        soc = new_soc
        explored += rep.size
        if merge:
            keep = _prune(soc, maxima, cost)
            rep, cha, dis = rep[keep], cha[keep], dis[keep]
            soc, maxima, cost = soc[keep], maxima[keep], cost[keep]
            if soc.size > DP_MAX_STATES:
                raise OracleTooLarge(f"dp state space exceeded {DP_MAX_STATES} states; use a smaller instance")
        history.append((rep, cha, dis))

    # the final interval restores the starting charge exactly
    t = T - 1
    need = j0 - soc
    cha = np.where(need > 0, need / (h * eta), 0.0)
    dis = np.where(need < 0, -need / h, 0.0)
    ok, _ = admissible(t, soc, cha, dis)
    if not ok.any():
        raise RuntimeError("no admissible battery sequence found; the idle dispatch should always be admissible")
    final_max, final_cost = advance(t, cha, dis, maxima, cost)
    total = final_cost + np.maximum(final_max, 0.0) @ rates
    best = int(np.argmin(np.where(ok, total, np.inf)))

    charge = np.zeros(T)
    discharge = np.zeros(T)
    charge[T - 1] = cha[best]
    discharge[T - 1] = dis[best]
    idx = best
    for step in range(T - 2, -1, -1):
        parent, step_cha, step_dis = history[step]
        charge[step] = step_cha[idx]
        discharge[step] = step_dis[idx]
        idx = int(parent[idx])
    dispatch = BatteryDispatch.from_power(inst.grid, spec, charge, discharge)
    bill = bill_of_dispatch(inst, dispatch, tolerance=1e-6)
    return OracleResult(bill, dispatch, mode, explored)


def _prune(soc, maxima, cost) -> np.ndarray:
    """Indices of states worth keeping, in ascending order.

    Future costs depend only on the stored charge and the running peaks, so
    among states sharing those the cheapest suffices. A state is also dropped
    when another one with the same charge and the same peaks in all but one
    dimension is no higher there and no more expensive. Charges equal to
    within ``SOC_KEY`` kWh count as the same.
    """
    n = cost.size
    if n <= 1:
        return np.arange(n)
    soc_key = np.round(soc / SOC_KEY).astype(np.int64)
    # integer ranks make ties exact and the segmented minimum below exact
    cost_rank = np.unique(cost, return_inverse=True)[1].astype(np.int64).ravel()
    cols = [soc_key] + [maxima[:, j] for j in range(maxima.shape[1])]
    idx = np.arange(n)

    order = np.lexsort((idx, cost_rank, *reversed(cols)))
    same = np.ones(n, dtype=bool)
    same[0] = False
    for c in cols:
        sc = c[order]
        same[1:] &= sc[1:] == sc[:-1]
    alive = np.sort(order[~same])

    for j in range(1, len(cols)):
        group = [c[alive] for i, c in enumerate(cols) if i != j]
        key = cols[j][alive]
        rank = cost_rank[alive]
        order = np.lexsort((alive, rank, key, *reversed(group)))
        m = order.size
        start = np.ones(m, dtype=bool)
        start[0] = True
        if m > 1:
            differs = np.zeros(m - 1, dtype=bool)
            for g in group:
                sg = g[order]
                differs |= sg[1:] != sg[:-1]
            start[1:] = differs
        gid = np.cumsum(start) - 1
        shifted = rank[order] - gid * n  # later groups sit strictly below earlier ones
        running = np.minimum.accumulate(shifted)
        dominated = np.zeros(m, dtype=bool)
        dominated[1:] = ~start[1:] & (running[:-1] <= shifted[1:])
        alive = np.sort(alive[order[~dominated]])
    return alive
