import sys

import pytest

from walshuniv.dyadic_core import DEFAULT_CELL_BUDGET, set_cell_budget


@pytest.fixture(autouse=True)
def _reset_budget():
    set_cell_budget(DEFAULT_CELL_BUDGET)
    yield
    set_cell_budget(DEFAULT_CELL_BUDGET)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
