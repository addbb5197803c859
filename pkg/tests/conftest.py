import numpy as np
import pytest

from eqq.measure import GridDensity
from eqq.transport import PointCloud


def random_grid(rng, d, side, total=1.0, nonzero=None, origin=None, h=None):
    """Grid of ``side**d`` cells with random masses on ``nonzero`` random cells."""
    shape = (side,) * d
    m = np.zeros(side**d)
    k = side**d if nonzero is None else min(nonzero, side**d)
    cells = rng.choice(side**d, size=k, replace=False)
    m[cells] = rng.random(k) + 0.05
    m *= total / m.sum()
    origin = np.zeros(d) if origin is None else origin
    h = 1.0 / side if h is None else h
    return GridDensity(d, shape, origin, h, m.reshape(shape), total)


def random_cloud(rng, d, n, total=1.0, lo=0.0, hi=1.0):
    return PointCloud(lo + (hi - lo) * rng.random((n, d)), total)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria: criterion -> list of (check, passed, detail)
ACCEPTANCE = {}


def record(criterion, check, passed, detail=""):
    """Note one check of an acceptance criterion and print it."""
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
    print(f"criterion {criterion} / {check}: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[criterion]
        ok = all(passed for _, passed, _ in checks)
        parts = "; ".join(f"{name} {'pass' if passed else 'FAIL'} ({detail})" for name, passed, detail in checks)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {parts}")
