from __future__ import annotations

import pytest

from shadowham import xnum


@pytest.fixture(autouse=True)
def default_precision():
    """Every test starts (and leaves the process) at the default precision."""
    xnum.set_working_precision(xnum.DEFAULT_DIGITS)
    yield
    xnum.set_working_precision(xnum.DEFAULT_DIGITS)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
