import numpy as np
import pytest

from visolve.core import Constants, FiniteSumVI
from visolve.problems import AffineSaddleSpec, make_affine_saddle


def scaled_identity(weights, dim=2, **kw):
    """Components ``F_i(z) = w_i z``."""
    weights = [float(w) for w in weights]
    return FiniteSumVI(n=len(weights), dim=dim, component=lambda i, z: weights[i] * z, **kw)


def rotation(**kw):
    """The bilinear field ``F(x, y) = (y, -x)``, monotone but not strongly."""
    return FiniteSumVI(n=1, dim=2, component=lambda i, z: np.array([z[1], -z[0]]),
                       constants=Constants(L=1.0, mu=0.0), **kw)


class Spy:
    """Wraps a component map and records every index it is called with."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def __call__(self, i, z):
        self.calls.append(i)
        return self.inner(i, z)


@pytest.fixture(scope="session")
def affine_small():
    return make_affine_saddle(AffineSaddleSpec(dim=6, n=4, mu=1.0, L=5.0, seed=3))


@pytest.fixture(scope="session")
def affine_thm():
    """The instance the step-size theorems are exercised on (d=20, n=10, mu=1, L=4)."""
    return make_affine_saddle(AffineSaddleSpec(dim=20, n=10, mu=1.0, L=4.0, seed=1))


# -- acceptance report --------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        verdict, title, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d} {verdict}: {title} ({detail})")
