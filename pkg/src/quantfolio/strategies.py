"""Markovian allocation rules ``(t, x) -> dollars held in each risky asset``.

Every family is a small frozen dataclass; :func:`allocation` dispatches on
the type. Insurance-type strategies (equilibrium, pre-committed, naive) are
only defined above their floor ``xi``: at the floor they hold nothing, below
it they raise :class:`BelowFloor` unless ``strict=False``, in which case the
clamped extension (zero holding) is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BelowFloor, HorizonReached, NonPositiveVariance, OutOfBand
from .market import PiecewiseCurve
from .normal import norm_cdf, norm_ppf, pdf_over_cdf

CURVE_TOL = 1e-9


@dataclass(frozen=True)
class Equilibrium:
    """``v*(t) (x - xi)``: the median equilibrium with insurance level ``xi``."""

    xi: float


@dataclass(frozen=True)
class ScaledInsurance:
    """``scale * v*(t) (x - xi)``; ``scale = 1`` is the equilibrium."""

    xi: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class FractionalKelly:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class PreCommitted:
    """Time-0 optimal median plan with floor ``xi`` for initial wealth ``anchor_x``."""

    xi: float
    anchor_x: float
    anchor_t: float = 0.0

    def __post_init__(self):
        if not self.anchor_x > self.xi:
            raise ValueError("pre-committed anchor wealth must exceed xi")
        if self.anchor_t != 0.0:
            raise NotImplementedError("only the time-0 anchor is supported")


@dataclass(frozen=True)
class Naive:
    xi: float


@dataclass(frozen=True, eq=False)
class ZeroInvestment:
    """``theta(t) (x - anchor_x)``: holds nothing while wealth sits at the anchor."""

    anchor_x: float
    theta: PiecewiseCurve | None = None


@dataclass(frozen=True, eq=False)
class GeneralAffine:
    """``theta0(t) + theta1(t) x`` for arbitrary piecewise curves."""

    theta0: PiecewiseCurve
    theta1: PiecewiseCurve

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.theta0(t) + np.multiply.outer(x, self.theta1(t))


AffineStrategy = GeneralAffine
INSURANCE_TYPES = (Equilibrium, ScaledInsurance, PreCommitted, Naive)


def proportional_params(strategy):
    """``(shift, scale)`` for rules of the form ``scale v*(t) (x - shift)``, else None."""
    if isinstance(strategy, Equilibrium):
        return strategy.xi, 1.0
    if isinstance(strategy, ScaledInsurance):
        return strategy.xi, strategy.scale
    if isinstance(strategy, FractionalKelly):
        return 0.0, strategy.gamma
    return None


def floor_of(strategy):
    return strategy.xi if isinstance(strategy, INSURANCE_TYPES) else None


def naive_delta(V_t):
    """Naive multiplier ``phi(-r) / (r Phi(-r))`` with ``r = sqrt(V_t)``."""
    V_t = np.asarray(V_t, dtype=float)
    if np.any(V_t <= 0):
        raise NonPositiveVariance("remaining Kelly variance must be positive")
    r = np.sqrt(V_t)
    out = pdf_over_cdf(-r) / r
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PreCommittedState:
    """Cached constants of the time-0 pre-committed plan."""

    xi: float
    x0: float
    V0: float
    k_star: float

    @classmethod
    def build(cls, xi, x0, kelly):
        V0 = kelly.variance(0.0)
        return cls(xi=float(xi), x0=float(x0), V0=V0, k_star=(x0 - xi) / float(norm_cdf(-math.sqrt(V0))))

    @property
    def cap(self):
        return self.xi + self.k_star


def precommitted_z0(state, V_t, x):
    """Driver level ``z`` at which the plan's wealth equals ``x`` (closed form)."""
    x = np.asarray(x, dtype=float)
    u = (x - state.xi) / state.k_star
    if np.any((u <= 0) | (u >= 1)):
        raise OutOfBand(f"wealth must lie in ({state.xi}, {state.cap})")
    return V_t + math.sqrt(V_t) * norm_ppf(u)


def precommitted_delta(state, t, x, kelly):
    """Multiplier of ``v*(t)(x - xi)`` in the pre-committed plan.

    ``Phi(d(t, z)) = (x - xi)/k*`` gives ``d = PhiInv((x - xi)/k*)`` directly.
    """
    if not 0.0 <= t < kelly.horizon:
        raise HorizonReached(f"t={t} outside [0, T)")
    V_t = kelly.variance(t)
    x = np.asarray(x, dtype=float)
    u = (x - state.xi) / state.k_star
    if np.any((u <= 0) | (u >= 1)):
        raise OutOfBand(f"wealth must lie in ({state.xi}, {state.cap})")
    d = norm_ppf(u)
    out = pdf_over_cdf(d) / math.sqrt(V_t)
    return out[()] if np.ndim(out) == 0 else out


def _check_floor(x, xi, strict):
    below = x < xi
    if strict and np.any(below):
        raise BelowFloor(f"wealth below insurance level {xi}")
    return x > xi


def allocation(strategy, kelly, t, x, strict=True, precommitted_state=None):
    """Dollar holdings at ``(t, x)``. ``x`` may be an array; the result then
    has shape ``(len(x), m)``."""
    T = kelly.horizon
    if not 0.0 <= t < T:
        raise HorizonReached(f"t={t} outside [0, {T})")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = kelly.model.num_assets

    if isinstance(strategy, Equilibrium):
        above = _check_floor(x, strategy.xi, strict)
        out = np.outer(np.where(above, x - strategy.xi, 0.0), kelly.v_star(t))
    elif isinstance(strategy, ScaledInsurance):
        above = _check_floor(x, strategy.xi, strict)
        out = np.outer(np.where(above, strategy.scale * (x - strategy.xi), 0.0), kelly.v_star(t))
    elif isinstance(strategy, FractionalKelly):
        out = np.outer(strategy.gamma * x, kelly.v_star(t))
    elif isinstance(strategy, Naive):
        above = _check_floor(x, strategy.xi, strict)
        mult = naive_delta(kelly.variance(t))
        out = np.outer(np.where(above, mult * (x - strategy.xi), 0.0), kelly.v_star(t))
    elif isinstance(strategy, PreCommitted):
        state = precommitted_state or PreCommittedState.build(strategy.xi, strategy.anchor_x, kelly)
        above = _check_floor(x, strategy.xi, strict)
        if strict and np.any(x >= state.cap):
            raise OutOfBand(f"wealth at or above the plan's cap {state.cap}")
        inside = above & (x < state.cap)
        mult = np.zeros_like(x)
        if np.any(inside):
            mult[inside] = precommitted_delta(state, t, x[inside], kelly)
        out = np.outer(mult * np.where(inside, x - strategy.xi, 0.0), kelly.v_star(t))
    elif isinstance(strategy, ZeroInvestment):
        theta = np.zeros(m) if strategy.theta is None else strategy.theta(t)
        out = np.outer(x - strategy.anchor_x, theta)
    elif isinstance(strategy, GeneralAffine):
        out = strategy(t, x)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    return out[0] if scalar else out


@dataclass(frozen=True)
class Classification:
    is_equilibrium: bool
    kind: str
    xi: float | None = None


def is_affine_equilibrium(strategy, alpha, x0, kelly, grid=None, tol=CURVE_TOL):
    """Classify an affine strategy by the structural equilibrium conditions.

    alpha = 1/2: slope must equal v* and the intercept must be -xi v* for a
    single constant xi < x0. alpha < 1/2: the holding at x0 must vanish.
    alpha > 1/2: never an equilibrium.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if alpha > 0.5:
        return Classification(False, "no affine equilibrium above the median")
    if grid is None:
        grid = kelly.grid
    th0 = np.array([strategy.theta0(t) for t in grid])
    th1 = np.array([strategy.theta1(t) for t in grid])
    if alpha < 0.5:
        if np.max(np.abs(th0 + th1 * x0)) <= tol:
            return Classification(True, "zero investment")
        return Classification(False, "invests at the status quo")
    v = np.array([kelly.v_star(t) for t in grid])
    if np.max(np.abs(th1 - v)) > tol:
        return Classification(False, "slope differs from the Kelly proportion")
    # theta0 = -xi v*; recover xi by least squares then check the fit.
    xi = -float(np.sum(th0 * v) / np.sum(v * v))
    if np.max(np.abs(th0 + xi * v)) > tol:
        return Classification(False, "intercept not a constant multiple of v*")
    if not xi < x0:
        return Classification(False, "insurance level not below initial wealth", xi)
    return Classification(True, "portfolio insurance", xi)
