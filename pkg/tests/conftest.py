import numpy as np
import pytest

from perihelion import chaos

ACCEPTANCE_LINES = []


def bisect(f, lo, hi, tol=1e-15):
    """Plain bisection, used as an independent root oracle."""
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


@pytest.fixture(scope="session")
def starred_plane():
    return chaos.SectionPlane.starred()


@pytest.fixture(scope="session")
def starred_map(starred_plane):
    return chaos.SectionMap(starred_plane)


@pytest.fixture(scope="session")
def census_run(starred_map):
    """Window census on the starred section, shared by several tests (about a minute)."""
    import time
    t0 = time.time()
    census = chaos.window_census(starred_map)
    return census, time.time() - t0


@pytest.fixture(scope="session")
def saddles(census_run):
    census, _ = census_run
    return chaos.saddle_pair(census)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
