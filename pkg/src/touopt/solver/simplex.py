"""Bounded-variable primal revised simplex on sparse LU factors.

Every row gets a logical (slack) column so the working system is
``[A | I] z = rhs`` with box bounds on all of ``z``. The basis inverse is a
SuperLU factorization plus a product-form eta file, rebuilt every
``refactor_every`` pivots. Phase 1 minimizes the sum of bound infeasibilities
of the basic variables, phase 2 the true cost. Pricing is Devex, ratio tests
use the Harris two-pass rule.

A feasible starting point can be supplied; it is turned into a starting basis
with a triangular crash, which usually skips phase 1 entirely.
"""

from __future__ import annotations

import math
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .problem import (
    GE,
    INFEASIBLE,
    LE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    RawSolution,
)

_BASIC = 0
_AT_LOWER = 1
_AT_UPPER = 2
_FREE_ZERO = 3
_FIXED = 4

_PIVOT_TOL = 1e-9
_DROP_TOL = 1e-13
_BLAND_AFTER = 400


class SingularBasis(RuntimeError):
    pass


class _BasisFactor:
    def __init__(self, work: sp.csc_matrix, head: np.ndarray):
        basis = work[:, head].tocsc()
        try:
            self.lu = splu(basis, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularBasis(str(exc)) from exc
        self.etas: list[tuple[int, np.ndarray, np.ndarray, float]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self.lu.solve(v)
        for r, idx, vals, piv in self.etas:
            xr = x[r] / piv
            if xr != 0.0:
                x[idx] -= vals * xr
            x[r] = xr
        return x

    def btran(self, w: np.ndarray) -> np.ndarray:
        w = w.copy()
        for r, idx, vals, piv in reversed(self.etas):
            w[r] = (w[r] - vals @ w[idx]) / piv
        return self.lu.solve(w, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        idx = np.flatnonzero(np.abs(alpha) > _DROP_TOL)
        idx = idx[idx != r]
        self.etas.append((r, idx, alpha[idx].copy(), float(alpha[r])))


def _cost_scale(c: np.ndarray) -> float:
    # power of two: scaled costs are exact, so rate-scaled problems pivot identically
    big = float(np.max(np.abs(c), initial=0.0))
    if big == 0.0:
        return 1.0
    _, exponent = math.frexp(big)
    return math.ldexp(1.0, -exponent)


class RevisedSimplex:
    """Solver state for one problem. Use :func:`solve_simplex`."""

    def __init__(
        self,
        problem: LpProblem,
        feasibility_tolerance: float = 1e-7,
        optimality_tolerance: float = 1e-7,
        max_iterations: int | None = None,
        time_limit_seconds: float | None = None,
        refactor_every: int = 60,
    ):
        self.problem = problem
        m, n = problem.num_rows, problem.num_vars
        self.m, self.n = m, n
        self.feas_tol = feasibility_tolerance
        self.opt_tol = optimality_tolerance
        self.max_iterations = max_iterations if max_iterations is not None else 50 * (m + n) + 1000
        self.time_limit = time_limit_seconds
        self.refactor_every = refactor_every

        eye = sp.identity(m, format="csr")
        self.work = sp.hstack([problem.matrix, eye], format="csc")
        self.work_t = self.work.T.tocsr()
        self.b = np.asarray(problem.rhs, dtype=float)

        self.scale = _cost_scale(problem.objective)
        self.cost = np.concatenate([problem.objective * self.scale, np.zeros(m)])

        senses = np.array(problem.senses, dtype="<U1")
        slack_lo = np.where(senses == GE, -np.inf, 0.0)
        slack_hi = np.where(senses == LE, np.inf, 0.0)
        self.lo = np.concatenate([problem.lower, slack_lo])
        self.hi = np.concatenate([problem.upper, slack_hi])
        self.iterations = 0
        self.phase1_iterations = 0
        self.started = time.perf_counter()

    # -- basis bookkeeping -------------------------------------------------

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        s, e = self.work.indptr[j], self.work.indptr[j + 1]
        col[self.work.indices[s:e]] = self.work.data[s:e]
        return col

    def _nonbasic_status(self, j: int, value: float) -> int:
        lo, hi = self.lo[j], self.hi[j]
        if lo == hi:
            return _FIXED
        if value == lo:
            return _AT_LOWER
        if value == hi:
            return _AT_UPPER
        return _FREE_ZERO

    def _park(self, j: int) -> None:
        """Make column ``j`` nonbasic at its nearest bound (zero if free)."""
        lo, hi, v = self.lo[j], self.hi[j], self.x[j]
        if np.isfinite(lo) and (not np.isfinite(hi) or abs(v - lo) <= abs(hi - v)):
            self.x[j] = lo
        elif np.isfinite(hi):
            self.x[j] = hi
        else:
            self.x[j] = 0.0
        self.status[j] = self._nonbasic_status(j, self.x[j])

    def _slack_basis(self) -> None:
        total = self.n + self.m
        self.head = np.arange(self.n, total)
        self.status = np.empty(total, dtype=np.int8)
        for j in range(self.n):
            self._park(j)
        self.status[self.head] = _BASIC

    def _crash(self, start: np.ndarray | None) -> None:
        """Pick a triangular starting basis.

        Structurals strictly inside their bounds (all free columns when no start
        is given) are swapped in over rows whose logical sits on a bound. A
        column may pivot on a row only if no earlier accepted column touches that
        row, which keeps the basis triangular and therefore nonsingular.
        """
        n = self.n
        if start is None:
            inside = np.isinf(self.lo[:n]) & np.isinf(self.hi[:n])
            row_free = np.zeros(self.m, dtype=bool)
        else:
            x0 = np.clip(np.asarray(start, dtype=float), self.lo[:n], self.hi[:n])
            self.x[:n] = x0
            tol = self.feas_tol
            inside = (x0 > self.lo[:n] + tol) & (x0 < self.hi[:n] - tol)
            slack = self.b - self.problem.matrix @ x0
            row_free = (slack > self.lo[n:] + tol) & (slack < self.hi[n:] - tol)
            for j in range(n):
                if not inside[j]:
                    self._park(j)
        forbidden = row_free.copy()
        cands = np.flatnonzero(inside)
        indptr, indices, data = self.work.indptr, self.work.indices, self.work.data
        counts = np.array(
            [np.count_nonzero(~row_free[indices[indptr[j] : indptr[j + 1]]]) for j in cands],
            dtype=int,
        )
        for j in cands[np.argsort(counts, kind="stable")]:
            rows = indices[indptr[j] : indptr[j + 1]]
            vals = data[indptr[j] : indptr[j + 1]]
            open_rows = np.flatnonzero(~forbidden[rows])
            if open_rows.size == 0:
                if start is not None:
                    self._park(j)
                continue
            k = open_rows[np.argmax(np.abs(vals[open_rows]))]
            r = int(rows[k])
            forbidden[rows] = True
            leaving = self.head[r]
            self.head[r] = j
            self.status[j] = _BASIC
            self._park(leaving)

    def _refactor(self) -> None:
        self.factor = _BasisFactor(self.work, self.head)
        xn = self.x.copy()
        xn[self.head] = 0.0
        self.x[self.head] = self.factor.ftran(self.b - self.work @ xn)

    def _infeasible_basics(self):
        xb = self.x[self.head]
        below = xb < self.lo[self.head] - self.feas_tol
        above = xb > self.hi[self.head] + self.feas_tol
        return below, above

    def _reduced_costs(self, below, above, phase1) -> np.ndarray:
        if phase1:
            cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
            d = -(self.work_t @ self.factor.btran(cb))
        else:
            d = self.cost - self.work_t @ self.factor.btran(self.cost[self.head])
        d[self.head] = 0.0
        return d

    # -- main loop ---------------------------------------------------------

    def solve(self, start: np.ndarray | None = None) -> RawSolution:
        total = self.n + self.m
        self.x = np.zeros(total)
        self._slack_basis()
        self._crash(start)
        try:
            self._refactor()
        except SingularBasis:
            self.x[:] = 0.0
            self._slack_basis()
            self._refactor()

        weights = np.ones(total)
        resets = 0
        confirmed = False
        degenerate_run = 0
        d = None
        d_stale = False
        ray_checked = False
        while True:
            if self.iterations >= self.max_iterations:
                return self._result(NUMERICAL_FAILURE, "iteration limit reached")
            if self.time_limit is not None and time.perf_counter() - self.started > self.time_limit:
                return self._result(NUMERICAL_FAILURE, "time limit reached")
            if len(self.factor.etas) >= self.refactor_every:
                try:
                    self._refactor()
                except SingularBasis:
                    resets += 1
                    if resets > 3:
                        return self._result(NUMERICAL_FAILURE, "repeated singular basis")
                    self._recover()
                d = None

            below, above = self._infeasible_basics()
            phase1 = bool(below.any() or above.any())
            if d_stale and not phase1:
                d = None
                d_stale = False
            if phase1 or d is None:
                d = self._reduced_costs(below, above, phase1)
                if phase1:
                    d_stale = True
            bland = degenerate_run > _BLAND_AFTER
            q = self._price(d, weights, bland)
            if q < 0:
                if not confirmed:
                    # re-price on fresh factors before concluding
                    confirmed = True
                    self._refactor()
                    d = None
                    continue
                if phase1:
                    return self._result(INFEASIBLE, "phase 1 optimum has positive infeasibility")
                return self._result(OPTIMAL, "optimal")
            confirmed = False
            if phase1:
                self.phase1_iterations += 1

            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.factor.ftran(self._column(q))
            r, theta, leave_value, leave_status = self._ratio_test(
                alpha * direction, below, above, bland
            )
            span = self.hi[q] - self.lo[q]
            if r < 0 and not np.isfinite(span):
                if not ray_checked:
                    ray_checked = True
                    self._refactor()
                    d = None
                    continue
                if phase1:
                    return self._result(NUMERICAL_FAILURE, "unbounded phase 1 ray")
                return self._result(UNBOUNDED, f"unbounded ray along column {q}")
            self.iterations += 1
            xb = self.x[self.head]
            if r < 0 or span <= theta:
                # bound flip: the entering variable runs to its opposite bound
                self.x[self.head] = xb - span * direction * alpha
                if direction > 0:
                    self.x[q] = self.hi[q]
                    self.status[q] = _AT_UPPER
                else:
                    self.x[q] = self.lo[q]
                    self.status[q] = _AT_LOWER
                degenerate_run = 0
                continue

            degenerate_run = degenerate_run + 1 if theta <= 0.0 else 0
            ray_checked = False
            piv = alpha[r]
            rho = self.factor.btran(np.eye(1, self.m, r).ravel())
            row = self.work_t @ rho
            dq = d[q]
            leaving = self.head[r]

            wq = max(weights[q], 1.0)
            ratio = row / piv
            np.maximum(weights, ratio * ratio * wq, out=weights)
            weights[leaving] = max(wq / (piv * piv), 1.0)
            if weights.max() > 1e8:
                weights[:] = 1.0

            self.x[self.head] = xb - theta * direction * alpha
            self.x[q] += theta * direction
            self.x[leaving] = leave_value
            self.status[leaving] = leave_status
            self.status[q] = _BASIC
            self.head[r] = q
            self.factor.update(r, alpha)
            if not phase1:
                d -= dq * ratio
                d[self.head] = 0.0
                d[leaving] = -dq / piv

    def _recover(self) -> None:
        self.head = np.arange(self.n, self.n + self.m)
        for j in range(self.n):
            if self.status[j] == _BASIC:
                self._park(j)
        self.status[self.head] = _BASIC
        self._refactor()

    def _price(self, d: np.ndarray, weights: np.ndarray, bland: bool) -> int:
        st = self.status
        tol = self.opt_tol
        eligible = (
            ((st == _AT_LOWER) & (d < -tol))
            | ((st == _AT_UPPER) & (d > tol))
            | ((st == _FREE_ZERO) & (np.abs(d) > tol))
        )
        candidates = np.flatnonzero(eligible)
        if candidates.size == 0:
            return -1
        if bland:
            return int(candidates[0])
        dc = d[candidates]
        return int(candidates[np.argmax(dc * dc / weights[candidates])])

    def _ratio_test(self, a, below, above, bland):
        """Basic values move as ``x_B - theta * a``. Returns (row, theta, value, status)."""
        nz = np.flatnonzero(np.abs(a) > _PIVOT_TOL)
        if nz.size == 0:
            return -1, np.inf, 0.0, 0
        heads = self.head[nz]
        av = a[nz]
        xb = self.x[heads]
        lo = self.lo[heads].copy()
        hi = self.hi[heads].copy()
        # phase 1: an infeasible basic blocks only where it reaches its violated bound
        bl = below[nz]
        ab = above[nz]
        hi[bl] = lo[bl]
        lo[bl] = -np.inf
        lo[ab] = hi[ab]
        hi[ab] = np.inf

        decreasing = av > 0
        target = np.where(decreasing, lo, hi)
        idx = np.flatnonzero(np.isfinite(target))
        if idx.size == 0:
            return -1, np.inf, 0.0, 0
        absa = np.abs(av[idx])
        dist = np.where(decreasing[idx], xb[idx] - lo[idx], hi[idx] - xb[idx])
        dist = np.maximum(dist, 0.0)
        if bland:
            ratios = dist / absa
            ties = np.flatnonzero(ratios <= ratios.min())
            pick = ties[np.argmin(heads[idx[ties]])]
        else:
            theta_max = np.min((dist + self.feas_tol) / absa)
            ok = np.flatnonzero(dist / absa <= theta_max)
            pick = ok[np.argmax(absa[ok])]
        k = idx[pick]
        theta = float(dist[pick] / absa[pick])
        j = heads[k]
        value = float(target[k])
        return int(nz[k]), theta, value, self._nonbasic_status(j, value)

    def _result(self, status: str, message: str) -> RawSolution:
        if status != OPTIMAL:
            return RawSolution(status, None, None, self.iterations, message)
        # basics may sit within tolerance outside their bounds
        x = np.clip(self.x[: self.n], self.problem.lower, self.problem.upper)
        return RawSolution(status, x, self.problem.objective_value(x), self.iterations, message)


def solve_simplex(problem: LpProblem, start: np.ndarray | None = None, **options) -> RawSolution:
    """Solve ``problem`` with the bundled revised simplex.

    ``start`` is an optional primal point (ideally feasible) used to build the
    initial basis.
    """
    if problem.num_rows == 0:
        return _solve_unconstrained(problem)
    return RevisedSimplex(problem, **options).solve(start)


def _solve_unconstrained(problem: LpProblem) -> RawSolution:
    c = problem.objective
    x = np.where(c > 0, problem.lower, np.where(c < 0, problem.upper, 0.0))
    x = np.where(c == 0, np.clip(0.0, problem.lower, problem.upper), x)
    if not np.isfinite(x).all():
        return RawSolution(UNBOUNDED, None, None, 0, "unbounded variable with nonzero cost")
    return RawSolution(OPTIMAL, x, problem.objective_value(x), 0, "optimal")
