import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantfolio.errors import DimensionMismatch, NonPositiveHorizon, OutOfRange
from quantfolio.kelly import kelly_curve
from quantfolio.market import (
    ConeConstraint,
    MarketModel,
    PiecewiseCurve,
    discount_normalize,
    integrate_squared_kelly_vol,
    validate,
)


def test_curve_is_right_continuous_with_left_limits():
    c = PiecewiseCurve.piecewise_constant([0, 0.5, 1], [1.0, 2.0])
    assert c(0.5) == 2.0
    assert c.left_limit(0.5) == 1.0
    assert c(1.0) == 2.0


def test_linear_curve_integral_is_exact():
    c = PiecewiseCurve.piecewise_linear([0, 1, 3], [0.0, 1.0, 5.0])
    # area of two trapezoids: 0.5 + 2*(1+5)/2
    assert c.integral(0, 3) == pytest.approx(6.5, abs=1e-15)
    assert c(2.0) == pytest.approx(3.0)


def test_validate_benchmark_passes(bench):
    assert validate(bench, 0.01).passed


def test_validate_zero_drift_segment():
    m = MarketModel(
        horizon=1.0,
        r=PiecewiseCurve.constant(1.0, 0.0),
        b=PiecewiseCurve.piecewise_constant([0, 0.5, 1], [[0.08], [0.0]]),
        sigma=PiecewiseCurve.constant(1.0, [[0.2]]),
        constraint=ConeConstraint.unconstrained(1),
    )
    rep = validate(m, 0.01)
    assert not rep.passed
    assert rep.first_failure_t == 0.5
    assert "Assumption 1(i)" in rep.reason


def test_validate_infeasible_cone():
    m = MarketModel.constant(1.0, [-0.08, -0.02], np.diag([0.2, 0.3]), Q=np.eye(2))
    rep = validate(m, 0.05)
    assert not rep.passed and "Assumption 2" in rep.reason


def test_shape_errors():
    with pytest.raises(NonPositiveHorizon):
        MarketModel.constant(0.0, 0.08, 0.2)
    with pytest.raises(DimensionMismatch):
        MarketModel(
            horizon=1.0,
            r=PiecewiseCurve.constant(1.0, 0.0),
            b=PiecewiseCurve.constant(1.0, [0.08, 0.01]),
            sigma=PiecewiseCurve.constant(1.0, [[0.2]]),
            constraint=ConeConstraint.unconstrained(1),
        )


def test_discount_normalize():
    m = MarketModel.constant(1.0, 0.08, 0.2, r=0.03)
    n = discount_normalize(m)
    assert n.r(0.3) == 0.0
    assert n.discount_factor(1.0) == pytest.approx(math.exp(-0.03), rel=1e-14)
    assert discount_normalize(n) is n
    pw = MarketModel(
        horizon=1.0,
        r=PiecewiseCurve.piecewise_constant([0, 0.5, 1], [0.02, 0.04]),
        b=PiecewiseCurve.constant(1.0, [0.08]),
        sigma=PiecewiseCurve.constant(1.0, [[0.2]]),
        constraint=ConeConstraint.unconstrained(1),
    )
    assert discount_normalize(pw).discount_factor(1.0) == pytest.approx(math.exp(-0.03), rel=1e-14)


def test_squared_kelly_vol_examples(bench, bench_kelly, two_regime):
    assert integrate_squared_kelly_vol(bench, bench_kelly, 0, 1) == pytest.approx(0.16, rel=1e-14)
    assert integrate_squared_kelly_vol(bench, bench_kelly, 0.4, 0.4) == 0.0
    k2 = kelly_curve(two_regime)
    assert integrate_squared_kelly_vol(two_regime, k2, 0, 1) == pytest.approx(0.10, abs=1e-12)
    with pytest.raises(OutOfRange):
        integrate_squared_kelly_vol(bench, bench_kelly, 0, 1.5)


def test_linear_market_variance_matches_fine_quadrature(two_asset_linear):
    k = kelly_curve(two_asset_linear)
    s = np.linspace(0, 2, 40001)[:-1] + 0.5 * 2 / 40000
    g = np.array([np.sum(k.sigma_v(u) ** 2) for u in s])
    assert k.variance(0.0) == pytest.approx(g.mean() * 2, rel=1e-7)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_variance_additive_and_monotone(a, b, c):
    from quantfolio.kelly import kelly_curve as kc

    m = MarketModel(
        horizon=1.0,
        r=PiecewiseCurve.constant(1.0, 0.0),
        b=PiecewiseCurve.piecewise_linear([0, 0.3, 1], [[0.05], [0.09], [0.02]]),
        sigma=PiecewiseCurve.piecewise_constant([0, 0.6, 1], [[[0.2]], [[0.3]]]),
        constraint=ConeConstraint.unconstrained(1),
    )
    k = _cached(m, kc)
    t0, t1, t2 = sorted([a, b, c])
    I = lambda x, y: integrate_squared_kelly_vol(m, k, x, y)
    assert I(t0, t2) == pytest.approx(I(t0, t1) + I(t1, t2), rel=1e-9, abs=1e-14)
    if t2 > t1:
        assert I(t0, t2) > I(t0, t1)


_CACHE = {}


def _cached(m, kc):
    return _CACHE.setdefault("k", kc(m))
