import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from aimgrid.metrics import compute_report  # noqa: E402
from aimgrid.sim import Simulation, grid_config  # noqa: E402


@pytest.fixture(scope="session")
def short_runs():
    """Five simulated minutes of the grid under every testbed."""
    out = {}
    for tb in "ABCD":
        res = Simulation(grid_config(tb, seed=1, duration=300.0)).run()
        out[tb] = (res, compute_report(res))
    return out


@pytest.fixture(scope="session")
def fine_run():
    """A short MILP run sampled at every step."""
    cfg = grid_config("D", seed=2, duration=180.0, sample_period=0.1, transcript=True)
    return Simulation(cfg).run()


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
