import numpy as np
import pytest
from hypothesis import settings

from quantfolio.kelly import kelly_curve
from quantfolio.market import ConeConstraint, MarketModel, PiecewiseCurve

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bench():
    """One asset, b = 0.08, sigma = 0.2, T = 1: v* = 2 and V(0) = 0.16."""
    return MarketModel.constant(1.0, 0.08, 0.2)


@pytest.fixture(scope="session")
def bench_kelly(bench):
    return kelly_curve(bench)


@pytest.fixture(scope="session")
def two_regime():
    """|sigma'v*|^2 = 0.16 on [0, 0.5) and 0.04 on [0.5, 1)."""
    return MarketModel(
        horizon=1.0,
        r=PiecewiseCurve.constant(1.0, 0.0),
        b=PiecewiseCurve.piecewise_constant([0, 0.5, 1], [[0.08], [0.04]]),
        sigma=PiecewiseCurve.piecewise_constant([0, 0.5, 1], [[[0.2]], [[0.2]]]),
        constraint=ConeConstraint.unconstrained(1),
    )


@pytest.fixture(scope="session")
def two_asset_linear():
    """Two assets, three factors, piecewise-linear drift, long-only."""
    sig = np.array([[0.2, 0.05, 0.0], [0.03, 0.25, 0.1]])
    return MarketModel(
        horizon=2.0,
        r=PiecewiseCurve.constant(2.0, 0.01),
        b=PiecewiseCurve.piecewise_linear([0, 1, 2], [[0.06, 0.02], [0.04, 0.05], [0.05, -0.01]]),
        sigma=PiecewiseCurve.piecewise_constant([0, 0.7, 2], [sig, 1.2 * sig]),
        constraint=ConeConstraint.no_short_sales(2),
    )


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
