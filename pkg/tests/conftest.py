import numpy as np
import pytest
from hypothesis import settings

from neuronized.data import RegressionData

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def make_data(n, p, seed=0, theta=None, sigma=1.0):
    """Gaussian design with a response drawn from ``theta`` (default: first two = 1)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    if theta is None:
        theta = np.zeros(p)
        theta[: min(2, p)] = 1.0
    y = X @ theta + sigma * rng.standard_normal(n)
    return RegressionData(X, y)


@pytest.fixture
def small_data():
    return make_data(50, 8, seed=1)


#: acceptance results keyed by criterion number, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 12):
        if k in ACCEPTANCE:
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")
