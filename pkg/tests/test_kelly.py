import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import kkt_enumeration, random_kelly_instance
from quantfolio.errors import IdentityViolation, SingularSigma
from quantfolio.kelly import fitness_identity_check, kelly_curve, solve_qp
from quantfolio.market import MarketModel


def test_one_asset_benchmark(bench_kelly):
    assert bench_kelly.v_star(0.3)[0] == pytest.approx(2.0, rel=1e-14)
    assert bench_kelly.variance(0.0) == pytest.approx(0.16, rel=1e-14)
    assert bench_kelly.variance(0.75) == pytest.approx(0.04, rel=1e-13)


def test_no_short_sales_drops_negative_drift_asset():
    sol = solve_qp(np.diag([0.04, 0.09]), [0.08, -0.02], np.eye(2))
    assert sol.v_star == pytest.approx([2.0, 0.0], abs=1e-12)
    assert sol.active_set == (1,)
    assert sol.multipliers[1] == pytest.approx(0.02, rel=1e-10)


def test_singular_covariance_rejected():
    with pytest.raises(SingularSigma):
        solve_qp(np.array([[1.0, 1.0], [1.0, 1.0]]), [0.1, 0.1])


def test_all_negative_drift_fails_identity():
    m = MarketModel.constant(1.0, [-0.05, -0.01], np.diag([0.2, 0.3]), Q=np.eye(2))
    with pytest.raises(IdentityViolation):
        kelly_curve(m, grid_step=0.5)


@pytest.mark.parametrize("seed", range(40))
def test_matches_kkt_enumeration(seed):
    rng = np.random.default_rng(seed)
    _, Sigma, b, Q = random_kelly_instance(rng, max_assets=6)
    v = solve_qp(Sigma, b, Q).v_star
    assert v == pytest.approx(kkt_enumeration(Sigma, b, Q), abs=1e-9)


@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_drift_scaling(seed, c):
    # the cone is scale invariant, so v*(cb) = c v*(b)
    _, Sigma, b, Q = random_kelly_instance(np.random.default_rng(seed), max_assets=5)
    v = solve_qp(Sigma, b, Q).v_star
    assert solve_qp(Sigma, c * b, Q).v_star == pytest.approx(c * v, rel=1e-8, abs=1e-10)


@given(st.integers(0, 10**6), st.data())
def test_warm_start_independence(seed, data):
    _, Sigma, b, Q = random_kelly_instance(np.random.default_rng(seed), max_assets=5)
    ws = data.draw(st.sets(st.integers(0, max(Q.shape[0] - 1, 0)))) if Q.shape[0] else set()
    a = solve_qp(Sigma, b, Q).v_star
    w = solve_qp(Sigma, b, Q, working_set=ws).v_star
    assert w == pytest.approx(a, abs=1e-9)


@given(st.integers(0, 10**6))
def test_feasible_and_identity(seed):
    _, Sigma, b, Q = random_kelly_instance(np.random.default_rng(seed))
    sol = solve_qp(Sigma, b, Q)
    v = sol.v_star
    assert np.all(Q @ v >= -1e-10)
    bv, vsv = b @ v, v @ Sigma @ v
    assert bv == pytest.approx(vsv, rel=1e-9, abs=1e-13)
    assert sol.stationarity < 1e-9 and sol.complementarity < 1e-9
    assert np.all(sol.multipliers >= -1e-10)


def test_identity_report_on_linear_market(two_asset_linear):
    k = kelly_curve(two_asset_linear, grid_step=0.05)
    rep = fitness_identity_check(k)
    assert rep.worst_residual < 1e-12 and rep.min_growth > 0


def test_curve_resolves_off_grid(two_asset_linear):
    k = kelly_curve(two_asset_linear, grid_step=0.5)
    b, sig = two_asset_linear.coefficients(0.37)
    ref = solve_qp(sig @ sig.T, b, np.eye(2)).v_star
    assert k.v_star(0.37) == pytest.approx(ref, abs=1e-12)
