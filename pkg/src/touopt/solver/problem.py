"""Sparse LP carrier shared by the model builder and the solver backends."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

LE = "L"
GE = "G"
EQ = "E"
_SENSES = (LE, GE, EQ)


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``min c·x`` subject to ``A x (<=|>=|=) rhs`` and ``lower <= x <= upper``.

    Rows are stored as a CSR matrix. ``senses`` holds one of ``"L"``, ``"G"``,
    ``"E"`` per row. Infinite bounds are ``±np.inf``.
    """

    var_names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    matrix: sp.csr_matrix
    senses: tuple[str, ...]
    rhs: np.ndarray
    row_names: tuple[str, ...]
    name: str = "lp"
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.var_names)
        m = len(self.row_names)
        for label, arr, size in (
            ("lower", self.lower, n),
            ("upper", self.upper, n),
            ("objective", self.objective, n),
            ("rhs", self.rhs, m),
        ):
            if np.shape(arr) != (size,):
                raise ValueError(f"{label} has shape {np.shape(arr)}, expected ({size},)")
        if self.matrix.shape != (m, n):
            raise ValueError(f"matrix has shape {self.matrix.shape}, expected ({m}, {n})")
        if len(self.senses) != m:
            raise ValueError("one sense per row required")
        if any(s not in _SENSES for s in self.senses):
            raise ValueError(f"row senses must be in {_SENSES}")
        if np.isnan(self.matrix.data).any() or not np.isfinite(self.matrix.data).all():
            raise ValueError("constraint matrix has non-finite coefficients")
        if not np.isfinite(self.objective).all() or not np.isfinite(self.rhs).all():
            raise ValueError("objective and rhs must be finite")
        if np.isnan(self.lower).any() or np.isnan(self.upper).any():
            raise ValueError("bounds must not be NaN")
        if (self.lower > self.upper).any():
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"variable {self.var_names[bad]} has lower > upper")
        if len(set(self.var_names)) != n or len(set(self.row_names)) != m:
            raise ValueError("variable and row names must be unique")
        for arr in (self.lower, self.upper, self.objective, self.rhs):
            arr.setflags(write=False)
        object.__setattr__(self, "_index", {name: j for j, name in enumerate(self.var_names)})

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    def index_of(self, var_name: str) -> int:
        return self._index[var_name]

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute bound or row violation of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = max(
            float(np.max(self.lower - x, initial=0.0)),
            float(np.max(x - self.upper, initial=0.0)),
        )
        activity = self.matrix @ x
        senses = np.array(self.senses)
        diff = activity - self.rhs
        le = np.where(senses == LE, diff, 0.0)
        ge = np.where(senses == GE, -diff, 0.0)
        eq = np.where(senses == EQ, np.abs(diff), 0.0)
        for part in (le, ge, eq):
            if part.size:
                worst = max(worst, float(part.max()))
        return worst


@dataclass(frozen=True)
class RawSolution:
    """What a backend hands back: status, primal point, objective."""

    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int = 0
    message: str = ""


OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"
STATUSES = (OPTIMAL, INFEASIBLE, UNBOUNDED, NUMERICAL_FAILURE)


def build_problem(
    var_names,
    lower,
    upper,
    objective,
    rows,
    cols,
    vals,
    senses,
    rhs,
    row_names,
    name="lp",
) -> LpProblem:
    """Assemble an :class:`LpProblem` from COO triplets (duplicates are summed)."""
    n = len(var_names)
    m = len(row_names)
    matrix = sp.coo_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))), shape=(m, n)
    ).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return LpProblem(
        var_names=tuple(var_names),
        lower=np.array(lower, dtype=float),
        upper=np.array(upper, dtype=float),
        objective=np.array(objective, dtype=float),
        matrix=matrix,
        senses=tuple(senses),
        rhs=np.array(rhs, dtype=float),
        row_names=tuple(row_names),
        name=name,
    )
