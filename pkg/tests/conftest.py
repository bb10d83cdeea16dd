import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bfnobs import GridFunction, PeriodicGrid

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# criterion id -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def random_state(grid: PeriodicGrid, rng: np.random.Generator, smooth: bool = False) -> GridFunction:
    if not smooth:
        return GridFunction(grid, rng.standard_normal(grid.n))
    k = np.arange(1, 6)
    ph = 2 * np.pi * np.outer(grid.nodes - grid.x0, k) / grid.length
    return GridFunction(grid, np.cos(ph) @ (rng.standard_normal(5) / k) + np.sin(ph) @ (rng.standard_normal(5) / k))


@pytest.fixture
def unit_grid():
    return PeriodicGrid(0.0, 1.0, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
