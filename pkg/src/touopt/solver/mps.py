"""Free-format MPS export/import of :class:`LpProblem`.

Names never contain whitespace, so the free format is unambiguous. The
objective row is called ``COST``. Bounds use ``FR``, ``MI``, ``PL``, ``LO``,
``UP`` and ``FX``; a variable with bounds ``[0, inf)`` gets no bound line.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .problem import EQ, GE, LE, LpProblem, build_problem

OBJECTIVE_ROW = "COST"


def _num(value: float) -> str:
    return repr(float(value))


def write_mps(problem: LpProblem, path) -> None:
    Path(path).write_text(dumps_mps(problem))


def dumps_mps(problem: LpProblem) -> str:
    for name in problem.var_names + problem.row_names:
        if not name or any(ch.isspace() for ch in name) or name == OBJECTIVE_ROW:
            raise ValueError(f"name {name!r} cannot be written to MPS")
    lines = [f"NAME {problem.name}", "ROWS", f" N {OBJECTIVE_ROW}"]
    lines += [f" {sense} {row}" for sense, row in zip(problem.senses, problem.row_names)]
    lines.append("COLUMNS")
    csc = problem.matrix.tocsc()
    csc.sort_indices()
    for j, var in enumerate(problem.var_names):
        c = problem.objective[j]
        if c != 0:
            lines.append(f" {var} {OBJECTIVE_ROW} {_num(c)}")
        for k in range(csc.indptr[j], csc.indptr[j + 1]):
            lines.append(f" {var} {problem.row_names[csc.indices[k]]} {_num(csc.data[k])}")
    lines.append("RHS")
    for row, value in zip(problem.row_names, problem.rhs):
        if value != 0:
            lines.append(f" RHS {row} {_num(value)}")
    lines.append("BOUNDS")
    for var, lo, hi in zip(problem.var_names, problem.lower, problem.upper):
        if lo == -math.inf and hi == math.inf:
            lines.append(f" FR BND {var}")
            continue
        if lo == hi:
            lines.append(f" FX BND {var} {_num(lo)}")
            continue
        if lo == -math.inf:
            lines.append(f" MI BND {var}")
        elif lo != 0:
            lines.append(f" LO BND {var} {_num(lo)}")
        if hi != math.inf:
            lines.append(f" UP BND {var} {_num(hi)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def read_mps(path) -> LpProblem:
    return loads_mps(Path(path).read_text())


def loads_mps(text: str) -> LpProblem:
    """Parse the subset of free MPS written by :func:`dumps_mps`."""
    name = "lp"
    section = None
    objective_row = None
    row_names: list[str] = []
    senses: list[str] = []
    row_index: dict[str, int] = {}
    var_index: dict[str, int] = {}
    cost: dict[int, float] = {}
    rows, cols, vals = [], [], []
    rhs: dict[int, float] = {}
    bounds: dict[int, list[float]] = {}

    def var(label):
        if label not in var_index:
            var_index[label] = len(var_index)
        return var_index[label]

    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        parts = raw.split()
        if not raw[0].isspace():
            section = parts[0]
            if section == "NAME" and len(parts) > 1:
                name = parts[1]
            if section == "ENDATA":
                break
            continue
        try:
            if section == "ROWS":
                sense, row = parts
                if sense == "N":
                    if objective_row is None:
                        objective_row = row
                    continue
                if sense not in (LE, GE, EQ):
                    raise ValueError(f"unknown row type {sense}")
                row_index[row] = len(row_names)
                row_names.append(row)
                senses.append(sense)
            elif section == "COLUMNS":
                j = var(parts[0])
                for row, value in zip(parts[1::2], parts[2::2]):
                    if row == objective_row:
                        cost[j] = float(value)
                    else:
                        rows.append(row_index[row])
                        cols.append(j)
                        vals.append(float(value))
            elif section == "RHS":
                for row, value in zip(parts[1::2], parts[2::2]):
                    if row != objective_row:
                        rhs[row_index[row]] = float(value)
            elif section == "BOUNDS":
                kind, label = parts[0], parts[2]
                j = var(label)
                lo, hi = bounds.setdefault(j, [0.0, math.inf])
                value = float(parts[3]) if len(parts) > 3 else None
                if kind == "FR":
                    lo, hi = -math.inf, math.inf
                elif kind == "MI":
                    lo = -math.inf
                elif kind == "PL":
                    hi = math.inf
                elif kind == "LO":
                    lo = value
                elif kind == "UP":
                    hi = value
                elif kind == "FX":
                    lo = hi = value
                else:
                    raise ValueError(f"unsupported bound type {kind}")
                bounds[j] = [lo, hi]
            else:
                raise ValueError(f"data line outside a known section: {section}")
        except (KeyError, ValueError, IndexError) as exc:
            raise ValueError(f"MPS line {lineno}: {exc}") from None

    n = len(var_index)
    names = sorted(var_index, key=var_index.get)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    for j, (lo, hi) in bounds.items():
        lower[j], upper[j] = lo, hi
    objective = np.zeros(n)
    for j, c in cost.items():
        objective[j] = c
    b = np.zeros(len(row_names))
    for i, value in rhs.items():
        b[i] = value
    return build_problem(names, lower, upper, objective, rows, cols, vals, senses, b, row_names, name=name)
