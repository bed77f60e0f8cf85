"""Deterministic-coefficient market: piecewise curves, cone constraint, checks.

Coefficient curves live on ``[0, T)`` with closed-left/open-right segments.
Evaluating a curve at a breakpoint returns the value of the segment starting
there; :meth:`PiecewiseCurve.left_limit` gives the value approached from the
left, which is what the feasibility check at ``b(t-)`` needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, NonPositiveHorizon, OutOfRange

MIN_EIGENVALUE = 1e-8
DEFAULT_GRID_STEP = 1.0 / 252.0


@dataclass(frozen=True, eq=False)
class PiecewiseCurve:
    """Piecewise-constant or piecewise-linear curve with values of any shape.

    ``start[i]`` and ``end[i]`` are the values of segment ``i`` at its left
    endpoint and its right-endpoint limit. For constant segments they agree.
    """

    breakpoints: np.ndarray
    start: np.ndarray
    end: np.ndarray
    kind: str = "constant"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if bp[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        start = np.asarray(self.start, dtype=float)
        end = np.asarray(self.end, dtype=float)
        if start.shape != end.shape or start.shape[0] != bp.size - 1:
            raise ValueError("one value per segment required")
        if not (np.all(np.isfinite(start)) and np.all(np.isfinite(end))):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @classmethod
    def constant(cls, horizon, value):
        value = np.asarray(value, dtype=float)
        return cls(np.array([0.0, horizon]), value[None], value[None].copy())

    @classmethod
    def piecewise_constant(cls, breakpoints, values):
        values = np.asarray(values, dtype=float)
        return cls(np.asarray(breakpoints, dtype=float), values, values.copy())

    @classmethod
    def piecewise_linear(cls, breakpoints, values):
        """``values`` holds either N+1 node values (continuous curve) or N
        ``(start, end)`` pairs (jumps allowed at breakpoints)."""
        bp = np.asarray(breakpoints, dtype=float)
        values = np.asarray(values, dtype=float)
        n = bp.size - 1
        if values.shape[0] == n + 1:
            start, end = values[:-1], values[1:]
        elif values.shape[0] == n and values.ndim >= 2 and values.shape[1] == 2:
            start, end = values[:, 0], values[:, 1]
        else:
            raise ValueError("linear curve needs N+1 node values or N (start, end) pairs")
        return cls(bp, start.copy(), end.copy(), kind="linear")

    @property
    def horizon(self):
        return float(self.breakpoints[-1])

    @property
    def value_shape(self):
        return self.start.shape[1:]

    @property
    def num_segments(self):
        return self.breakpoints.size - 1

    def segment_index(self, t, side="right"):
        """Segment containing ``t``; ``side='left'`` picks the segment ending at
        a breakpoint instead of the one starting there."""
        bp = self.breakpoints
        if t < bp[0] or t > bp[-1]:
            raise OutOfRange(f"t={t} outside [0, {bp[-1]}]")
        if side == "right":
            i = int(np.searchsorted(bp, t, side="right")) - 1
        else:
            i = int(np.searchsorted(bp, t, side="left")) - 1
        return min(max(i, 0), self.num_segments - 1)

    def on_segment(self, i, t):
        """Continuous extension of segment ``i`` evaluated at ``t``."""
        if self.kind == "constant":
            return self.start[i]
        a, b = self.breakpoints[i], self.breakpoints[i + 1]
        w = (t - a) / (b - a)
        return (1.0 - w) * self.start[i] + w * self.end[i]

    def __call__(self, t):
        return self.on_segment(self.segment_index(t), t)

    def left_limit(self, t):
        return self.on_segment(self.segment_index(t, side="left"), t)

    def segment_is_constant(self, i):
        return self.kind == "constant" or np.array_equal(self.start[i], self.end[i])

    def integral(self, a, b):
        """Exact integral over ``[a, b]`` (trapezoid is exact on linear pieces)."""
        if b < a:
            raise OutOfRange("integration bounds reversed")
        total = np.zeros(self.value_shape)
        bp = self.breakpoints
        for i in range(self.num_segments):
            lo, hi = max(a, bp[i]), min(b, bp[i + 1])
            if hi > lo:
                total = total + 0.5 * (hi - lo) * (self.on_segment(i, lo) + self.on_segment(i, hi))
        return total[()] if total.ndim == 0 else total

    def to_dict(self):
        d = {"breakpoints": self.breakpoints.tolist()}
        if self.kind == "linear":
            d["kind"] = "linear"
            d["values"] = np.stack([self.start, self.end], axis=1).tolist()
        else:
            d["values"] = self.start.tolist()
        return d


@dataclass(frozen=True, eq=False)
class ConeConstraint:
    """Admissible portfolios satisfy ``Q @ pi >= 0``; zero rows means no constraint."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2:
            raise DimensionMismatch("constraint matrix must be two-dimensional")
        if not np.all(np.isfinite(Q)):
            raise ValueError("constraint matrix must be finite")
        object.__setattr__(self, "Q", Q)

    @classmethod
    def unconstrained(cls, m):
        return cls(np.zeros((0, m)))

    @classmethod
    def no_short_sales(cls, m):
        return cls(np.eye(m))

    @property
    def num_rows(self):
        return self.Q.shape[0]

    def is_feasible(self, pi, tol=1e-12):
        pi = np.asarray(pi, dtype=float)
        return bool(np.all(self.Q @ pi >= -tol))


@dataclass(frozen=True, eq=False)
class MarketModel:
    horizon: float
    r: PiecewiseCurve
    b: PiecewiseCurve
    sigma: PiecewiseCurve
    constraint: ConeConstraint
    # Original short-rate curve kept after discount normalisation.
    discount_rate: PiecewiseCurve | None = None
    _breakpoints: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise NonPositiveHorizon(f"horizon must be positive, got {self.horizon}")
        curves = {"r": self.r, "b": self.b, "sigma": self.sigma}
        for name, c in curves.items():
            if not math.isclose(c.horizon, self.horizon, rel_tol=0, abs_tol=1e-12):
                raise DimensionMismatch(f"curve {name} ends at {c.horizon}, horizon is {self.horizon}")
        if self.r.value_shape != ():
            raise DimensionMismatch("r must be scalar-valued")
        if len(self.b.value_shape) != 1:
            raise DimensionMismatch("b must be vector-valued")
        m = self.b.value_shape[0]
        if len(self.sigma.value_shape) != 2 or self.sigma.value_shape[0] != m:
            raise DimensionMismatch(f"sigma must be {m} x d, got {self.sigma.value_shape}")
        if self.constraint.Q.shape[1] != m:
            raise DimensionMismatch(f"constraint matrix must have {m} columns")
        bps = np.unique(np.concatenate([c.breakpoints for c in curves.values()]))
        object.__setattr__(self, "_breakpoints", bps)

    @classmethod
    def constant(cls, horizon, b, sigma, r=0.0, Q=None):
        """Constant-coefficient market; scalars are promoted to one asset/factor."""
        if not horizon > 0:
            raise NonPositiveHorizon(f"horizon must be positive, got {horizon}")
        b = np.atleast_1d(np.asarray(b, dtype=float))
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = sigma.reshape(1, 1)
        elif sigma.ndim == 1:
            sigma = np.diag(sigma) if sigma.size == b.size else sigma.reshape(b.size, -1)
        Q = np.zeros((0, b.size)) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
        return cls(
            horizon=float(horizon),
            r=PiecewiseCurve.constant(horizon, float(r)),
            b=PiecewiseCurve.constant(horizon, b),
            sigma=PiecewiseCurve.constant(horizon, sigma),
            constraint=ConeConstraint(Q),
        )

    @property
    def num_assets(self):
        return self.b.value_shape[0]

    @property
    def num_factors(self):
        return self.sigma.value_shape[1]

    @property
    def breakpoints(self):
        """Union of the breakpoints of every coefficient curve."""
        return self._breakpoints

    def merged_segment(self, t, side="right"):
        bp = self._breakpoints
        if t < 0 or t > self.horizon:
            raise OutOfRange(f"t={t} outside [0, {self.horizon}]")
        if side == "right":
            i = int(np.searchsorted(bp, t, side="right")) - 1
        else:
            i = int(np.searchsorted(bp, t, side="left")) - 1
        return min(max(i, 0), bp.size - 2)

    def coefficients(self, t, side="right"):
        """``(b(t), sigma(t))``; ``side='left'`` returns left limits."""
        if side == "right":
            return self.b(t), self.sigma(t)
        return self.b.left_limit(t), self.sigma.left_limit(t)

    def segment_is_constant(self, k):
        """True when b and sigma are constant on merged segment ``k``."""
        bp = self._breakpoints
        mid = 0.5 * (bp[k] + bp[k + 1])
        return all(
            c.segment_is_constant(c.segment_index(mid)) for c in (self.b, self.sigma)
        )

    def discount_factor(self, s):
        """``exp(-int_0^s r)`` for the original (pre-normalisation) rate."""
        rate = self.discount_rate if self.discount_rate is not None else self.r
        return math.exp(-float(rate.integral(0.0, s)))


@dataclass
class ValidationReport:
    times: np.ndarray
    sides: list
    min_eigenvalue: np.ndarray
    b_norm: np.ndarray
    kelly_growth: np.ndarray
    passed: bool
    first_failure_t: float | None = None
    reason: str | None = None

    def summary(self):
        if self.passed:
            return f"PASS ({self.times.size} grid points)"
        return f"FAIL at t={self.first_failure_t:.6g}: {self.reason}"


def validation_grid(model, grid_step=DEFAULT_GRID_STEP):
    """Grid points with the side at which coefficients are read.

    Regular points and segment starts are read from the right; every interior
    breakpoint and T are also read as left limits.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    T = model.horizon
    pts = [(float(t), "right") for t in np.arange(0.0, T, grid_step)]
    pts += [(float(t), "right") for t in model.breakpoints[:-1]]
    pts += [(float(t), "left") for t in model.breakpoints[1:]]
    pts = sorted(set(pts), key=lambda p: (p[0], p[1] == "right"))
    return pts


def validate(model, grid_step=DEFAULT_GRID_STEP, tol=1e-10):
    """Check the non-degeneracy and feasibility conditions on a time grid."""
    from .kelly import solve_qp

    pts = validation_grid(model, grid_step)
    n = len(pts)
    min_eig = np.empty(n)
    b_norm = np.empty(n)
    growth = np.full(n, np.nan)
    first_t, reason = None, None
    Q = model.constraint.Q
    for k, (t, side) in enumerate(pts):
        b, sig = model.coefficients(t, side)
        Sigma = sig @ sig.T
        min_eig[k] = np.linalg.eigvalsh(Sigma)[0]
        b_norm[k] = np.linalg.norm(b)
        problem = None
        if not b_norm[k] > 0:
            problem = "Assumption 1(i): b(t) = 0"
        elif min_eig[k] < MIN_EIGENVALUE:
            problem = f"Assumption 1(ii): min eigenvalue of sigma sigma' = {min_eig[k]:.3e} < {MIN_EIGENVALUE:g}"
        else:
            sol = solve_qp(Sigma, b, Q, tol=tol)
            growth[k] = float(b @ sol.v_star)
            if not growth[k] > tol:
                problem = "Assumption 2: no v with b'v > 0 and Qv >= 0"
        if problem and first_t is None:
            first_t, reason = t, problem + ("" if side == "right" else " (left limit)")
    return ValidationReport(
        times=np.array([p[0] for p in pts]),
        sides=[p[1] for p in pts],
        min_eigenvalue=min_eig,
        b_norm=b_norm,
        kelly_growth=growth,
        passed=first_t is None,
        first_failure_t=first_t,
        reason=reason,
    )


def discount_normalize(model):
    """Return the same market with ``r = 0``; the original rate is kept for
    converting discounted outputs back. Idempotent."""
    bp = model.r.breakpoints
    if model.discount_rate is not None or (
        not np.any(model.r.start) and not np.any(model.r.end)
    ):
        return model
    zero = PiecewiseCurve(bp, np.zeros_like(model.r.start), np.zeros_like(model.r.end), model.r.kind)
    return replace(model, r=zero, discount_rate=model.r)


def simpson(f, a, b, rel_tol=1e-10, max_level=16):
    """Composite Simpson on ``[a, b]``, doubling panels until two successive
    refinements agree to ``rel_tol``. ``f`` must accept a 1-d array."""
    if b <= a:
        return 0.0
    n = 2
    x = np.linspace(a, b, n + 1)
    y = np.asarray(f(x), dtype=float)
    h = (b - a) / n
    prev = h / 3.0 * (y[0] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum() + y[-1])
    for _ in range(max_level):
        n *= 2
        h = (b - a) / n
        xm = a + h * np.arange(1, n, 2)
        ym = np.asarray(f(xm), dtype=float)
        ynew = np.empty(n + 1)
        ynew[0::2] = y
        ynew[1::2] = ym
        y = ynew
        cur = h / 3.0 * (y[0] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum() + y[-1])
        if abs(cur - prev) <= rel_tol * abs(cur) or cur == prev:
            return float(cur)
        prev = cur
    return float(cur)


def integrate_on_segments(model, f, t, s, rel_tol=1e-10):
    """Integrate ``f(k, tau)`` over ``[t, s]`` split at every breakpoint.

    ``f(k, tau)`` evaluates the integrand on merged segment ``k`` (continuous
    extension), so segment right endpoints use left limits.
    """
    T = model.horizon
    if not (0.0 <= t <= T and 0.0 <= s <= T):
        raise OutOfRange(f"interval [{t}, {s}] outside [0, {T}]")
    if s < t:
        raise OutOfRange("integration bounds reversed")
    if s == t:
        return 0.0
    bp = model.breakpoints
    total = 0.0
    for k in range(bp.size - 1):
        lo, hi = max(t, bp[k]), min(s, bp[k + 1])
        if hi <= lo:
            continue
        if model.segment_is_constant(k):
            total += (hi - lo) * float(f(k, np.array([lo]))[0])
        else:
            total += simpson(lambda x, k=k: f(k, x), lo, hi, rel_tol=rel_tol)
    return total


def integrate_squared_kelly_vol(model, kelly, t, s):
    """``int_t^s |sigma(u)' v*(u)|^2 du``."""
    return integrate_on_segments(model, kelly.growth_on_segment, t, s)
