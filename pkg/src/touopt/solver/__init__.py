"""Pluggable LP backends behind one :func:`solve` entry point.

Backends:

``simplex``
    The bundled sparse revised simplex (default, deterministic).
``highs``
    HiGHS through :func:`scipy.optimize.linprog`.
``external``
    Any executable named by ``$TOUOPT_EXTERNAL_SOLVER`` (or
    ``SolverConfig.external_command``). It is called as
    ``<command> <problem.mps> <result.txt>`` and must write a result file::

        status optimal
        objective 1234.5
        dnet[0] 12.0
        ...

    Status is one of ``optimal``, ``infeasible``, ``unbounded``,
    ``numerical-failure``; variables not listed are taken as zero. A nonzero
    exit code is reported as ``numerical-failure``.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mps import read_mps, write_mps
from .problem import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    STATUSES,
    UNBOUNDED,
    LpProblem,
    RawSolution,
    build_problem,
)
from .simplex import solve_simplex

__all__ = [
    "BACKENDS",
    "EXTERNAL_ENV",
    "LpProblem",
    "RawSolution",
    "SolverConfig",
    "build_problem",
    "read_mps",
    "read_result_file",
    "solve",
    "write_mps",
    "write_result_file",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "NUMERICAL_FAILURE",
    "STATUSES",
]

BACKENDS = ("simplex", "highs", "external")
EXTERNAL_ENV = "TOUOPT_EXTERNAL_SOLVER"


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "simplex"
    feasibility_tolerance: float = 1e-7
    optimality_tolerance: float = 1e-7
    max_iterations: int | None = None
    time_limit_seconds: float | None = None
    external_command: str | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown solver backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if not (self.feasibility_tolerance > 0 and self.optimality_tolerance > 0):
            raise ValueError("solver tolerances must be > 0")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.time_limit_seconds is not None and not self.time_limit_seconds > 0:
            raise ValueError("time_limit_seconds must be > 0")


def solve(problem: LpProblem, config: SolverConfig | None = None, start: np.ndarray | None = None) -> RawSolution:
    """Solve ``problem``. ``start`` is a primal hint used by the bundled simplex only."""
    config = config or SolverConfig()
    if config.backend == "simplex":
        return solve_simplex(
            problem,
            start=start,
            feasibility_tolerance=config.feasibility_tolerance,
            optimality_tolerance=config.optimality_tolerance,
            max_iterations=config.max_iterations,
            time_limit_seconds=config.time_limit_seconds,
        )
    if config.backend == "highs":
        return _solve_highs(problem, config)
    return _solve_external(problem, config)


def _solve_highs(problem: LpProblem, config: SolverConfig) -> RawSolution:
    from scipy.optimize import linprog

    senses = np.array(problem.senses, dtype="<U1")
    A = problem.matrix
    ub_rows = np.flatnonzero(senses != EQ)
    eq_rows = np.flatnonzero(senses == EQ)
    sign = np.where(senses[ub_rows] == GE, -1.0, 1.0)
    A_ub = A[ub_rows].multiply(sign[:, None]).tocsr() if ub_rows.size else None
    b_ub = problem.rhs[ub_rows] * sign if ub_rows.size else None
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = problem.rhs[eq_rows] if eq_rows.size else None
    options = {
        "primal_feasibility_tolerance": config.feasibility_tolerance,
        "dual_feasibility_tolerance": config.optimality_tolerance,
    }
    if config.time_limit_seconds is not None:
        options["time_limit"] = config.time_limit_seconds
    if config.max_iterations is not None:
        options["maxiter"] = config.max_iterations
    bounds = np.column_stack([problem.lower, problem.upper])
    res = linprog(problem.objective, A_ub, b_ub, A_eq, b_eq, bounds=bounds, method="highs", options=options)
    iterations = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        x = np.clip(res.x, problem.lower, problem.upper)
        return RawSolution(OPTIMAL, x, problem.objective_value(x), iterations, res.message)
    status = {2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERICAL_FAILURE)
    return RawSolution(status, None, None, iterations, res.message)


def write_result_file(path, solution: RawSolution, var_names) -> None:
    """Write ``solution`` in the external-solver result format."""
    lines = [f"status {solution.status}"]
    if solution.status == OPTIMAL:
        lines.append(f"objective {float(solution.objective)!r}")
        lines += [f"{name} {float(v)!r}" for name, v in zip(var_names, solution.x)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_result_file(path, problem: LpProblem) -> RawSolution:
    lines = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines or lines[0][0] != "status" or len(lines[0]) != 2:
        raise ValueError("result file must start with 'status <status>'")
    status = lines[0][1]
    if status not in STATUSES:
        raise ValueError(f"unknown status {status!r} in result file")
    if status != OPTIMAL:
        return RawSolution(status, None, None, 0, "reported by external solver")
    if len(lines) < 2 or lines[1][0] != "objective" or len(lines[1]) != 2:
        raise ValueError("second line of an optimal result must be 'objective <value>'")
    objective = float(lines[1][1])
    x = np.zeros(problem.num_vars)
    for parts in lines[2:]:
        if len(parts) != 2:
            raise ValueError(f"bad variable line {' '.join(parts)!r}")
        try:
            x[problem.index_of(parts[0])] = float(parts[1])
        except KeyError:
            raise ValueError(f"result names unknown variable {parts[0]!r}") from None
    return RawSolution(OPTIMAL, x, objective, 0, "reported by external solver")


def _solve_external(problem: LpProblem, config: SolverConfig) -> RawSolution:
    command = config.external_command or os.environ.get(EXTERNAL_ENV)
    if not command:
        raise ValueError(f"external backend needs ${EXTERNAL_ENV} or SolverConfig.external_command")
    with tempfile.TemporaryDirectory(prefix="touopt-") as tmp:
        mps_path = Path(tmp) / "problem.mps"
        result_path = Path(tmp) / "result.txt"
        write_mps(problem, mps_path)
        try:
            proc = subprocess.run(
                [*shlex.split(command), str(mps_path), str(result_path)],
                capture_output=True,
                text=True,
                timeout=config.time_limit_seconds,
            )
        except subprocess.TimeoutExpired:
            return RawSolution(NUMERICAL_FAILURE, None, None, 0, "external solver hit the time limit")
        except OSError as exc:
            return RawSolution(NUMERICAL_FAILURE, None, None, 0, f"cannot run external solver: {exc}")
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or [""]
            return RawSolution(
                NUMERICAL_FAILURE, None, None, 0, f"external solver exited with {proc.returncode}: {tail[0]}"
            )
        try:
            return read_result_file(result_path, problem)
        except (OSError, ValueError) as exc:
            return RawSolution(NUMERICAL_FAILURE, None, None, 0, f"unreadable external result: {exc}")
