"""Suite-wide hooks.

Every dispatch the LP returns anywhere in the suite is re-validated here and
tallied, so the acceptance check on constraint satisfaction covers the whole
run. The acceptance module is moved to the end so it sees the full tally.
"""

from __future__ import annotations

import pytest

from touopt import lp_model
from touopt.bes import validate_dispatch

DISPATCH_TOL = 1e-6


class DispatchAudit:
    def __init__(self):
        self.checked = 0
        self.failures: list[str] = []

    def record(self, inst, sol) -> None:
        if not sol.ok:
            return
        self.checked += 1
        bad = validate_dispatch(inst.spec, sol.dispatch, inst.base_kw, DISPATCH_TOL)
        if bad:
            self.failures.append(f"{inst.tariff_name} {inst.grid.start:%Y-%m}: {bad[0]}")


AUDIT = DispatchAudit()
REPORT: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def audit_lp_dispatches():
    original = lp_model.extract_solution

    def audited(inst, lp, raw):
        sol = original(inst, lp, raw)
        AUDIT.record(inst, sol)
        return sol

    lp_model.extract_solution = audited
    yield AUDIT
    lp_model.extract_solution = original


def pytest_collection_modifyitems(items):
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
