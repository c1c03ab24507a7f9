import sys

import numpy as np
import pytest

from pzobo.problems import QuadraticProblem, quadratic_make


def central_diff(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


@pytest.fixture
def toy_quadratic():
    """A=2I, B=I, c=0, y_t=0, lam_r=0 in two dimensions."""
    return QuadraticProblem(2 * np.eye(2), np.eye(2), np.zeros(2), np.zeros(2), lam_r=0.0)


@pytest.fixture
def quad10():
    return quadratic_make(7, p=10, d=10, conditioning=10)


@pytest.fixture
def finite_sum_quad():
    return quadratic_make(3, p=6, d=5, conditioning=5, m=64, n=32)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
