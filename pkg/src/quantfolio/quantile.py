"""Closed-form wealth laws, quantiles and deviation rates.

Every strategy with an explicit law here has terminal wealth of the form

    X = c + (x - c) exp(N),   N ~ Normal(m, s^2)

with ``m`` and ``s`` independent of the starting wealth ``x``. The
pre-committed plan is the exception (a bounded, two-point terminal law) and
gets its own formulas. Wealth is always discounted wealth (``r = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import (
    BelowFloor,
    DegenerateQuantile,
    DegenerateVariance,
    HorizonContact,
    NonPositiveWealth,
    OutOfBand,
    OutOfRange,
    OutOfSupport,
    UnsupportedStrategy,
    ValidationError,
    WeightRowMismatch,
    ZeroDeviation,
)
from .normal import norm_cdf, norm_pdf, norm_ppf, pdf_over_cdf
from .strategies import (
    FractionalKelly,
    GeneralAffine,
    Naive,
    PreCommitted,
    PreCommittedState,
    ZeroInvestment,
    allocation,
    proportional_params,
)

TWO_OVER_PI = 2.0 / math.pi


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha={alpha} must lie in (0, 1)")


def _scalar(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


# ---------------------------------------------------------------------------
# medians and simple comparisons


def median_equilibrium(xi, t, x, V_t):
    """Median of terminal wealth under ``v*(x - xi)``: ``xi + (x - xi) e^{V/2}``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= xi):
        raise BelowFloor(f"wealth must exceed xi={xi}")
    if V_t < 0:
        raise ValueError("V_t must be non-negative")
    return _scalar(xi + (x - xi) * math.exp(0.5 * V_t))


def median_fractional_kelly(gamma, t, x, V_t):
    """``x exp((gamma - gamma^2/2) V)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise NonPositiveWealth("fractional Kelly needs positive wealth")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return _scalar(x * math.exp((gamma - 0.5 * gamma * gamma) * V_t))


def crossover_a(gamma, V_t):
    """Ratio ``a`` such that the fractional-Kelly median beats the equilibrium
    median exactly when ``x < a xi``."""
    if not 0.0 < gamma < 1.0:
        raise OutOfRange("gamma must lie in (0, 1)")
    if not V_t > 0:
        raise DegenerateVariance("V_t must be positive")
    half = math.expm1(0.5 * V_t)
    # e^{V/2} - e^{kV} = e^{kV} (e^{(1/2 - k)V} - 1) keeps precision near gamma = 1
    k = gamma - 0.5 * gamma * gamma
    return half / (math.exp(k * V_t) * math.expm1((0.5 - k) * V_t))


def quantile_constant_proportion(v, alpha, t, x, model):
    """Alpha-quantile of ``ln(X(T)/x)`` when a constant proportion ``v`` is held
    in a market with constant coefficients."""
    _check_alpha(alpha)
    if not x > 0:
        raise NonPositiveWealth("wealth must be positive")
    b, sig = model.coefficients(t)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    var = float(v @ sig @ sig.T @ v)
    tau = model.horizon - t
    return (float(b @ v) - 0.5 * var) * tau + math.sqrt(var * tau) * float(norm_ppf(alpha))


# ---------------------------------------------------------------------------
# shifted-lognormal laws


@dataclass(frozen=True)
class FDerivatives:
    F: float
    F_x: float
    F_xx: float
    F_y: float


@dataclass(frozen=True)
class ShiftedLognormal:
    """Law of ``c + (x - c) exp(N)`` with ``N ~ Normal(m, s^2)``."""

    c: float
    x: float
    m: float
    s: float

    def quantile(self, alpha):
        _check_alpha(alpha)
        if self.x == self.c or self.s == 0.0:
            return self.c + (self.x - self.c) * math.exp(self.m)
        # for x < c the map N -> X is decreasing, so the level flips
        a = alpha if self.x > self.c else 1.0 - alpha
        return self.c + (self.x - self.c) * math.exp(self.m + self.s * float(norm_ppf(a)))

    def median(self):
        return self.quantile(0.5)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.x <= self.c:
            raise OutOfSupport("cdf implemented for x above the shift only")
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (np.log((y - self.c) / (self.x - self.c)) - self.m) / self.s
        return _scalar(np.where(y > self.c, norm_cdf(np.where(y > self.c, u, 0.0)), 0.0))

    def derivatives(self, y):
        """``F`` and its partials in ``x`` (twice) and ``y`` at ``y``."""
        if self.x <= self.c:
            raise OutOfSupport("starting wealth must exceed the shift")
        if self.s <= 0:
            raise DegenerateVariance("degenerate law has no density")
        if y <= self.c:
            return FDerivatives(0.0, 0.0, 0.0, 0.0)
        dx, s = self.x - self.c, self.s
        u = (math.log((y - self.c) / dx) - self.m) / s
        p = float(norm_pdf(u))
        F_x = -p / (s * dx)
        F_xx = p / (s * dx * dx) * (1.0 - u / s)
        F_y = p / (s * (y - self.c))
        return FDerivatives(float(norm_cdf(u)), F_x, F_xx, F_y)


def equilibrium_F_and_derivatives(xi, t, x, y, V_t):
    """``(F, F_x, F_xx, F_y)`` of terminal wealth under the equilibrium with floor ``xi``."""
    if x <= xi:
        raise OutOfSupport(f"x={x} must exceed xi={xi}")
    if not V_t > 0:
        raise DegenerateVariance("V_t must be positive")
    law = ShiftedLognormal(c=float(xi), x=float(x), m=0.5 * V_t, s=math.sqrt(V_t))
    return law.derivatives(y)


def _hazard(r):
    """``phi(r) / Phi(-r)``."""
    return float(pdf_over_cdf(-r))


def naive_log_moments(r_hi, r_lo):
    """Mean and variance of ``ln((X - xi)/(x - xi))`` for the naive strategy
    between remaining-variance levels ``r_hi^2`` and ``r_lo^2`` (``r = sqrt(V)``).

    With ``Delta = h(r)/r`` and ``dV = 2r dr`` the log-drift is
    ``int (2h - h^2/r) dr`` and the variance ``int 2h^2/r dr``. The
    ``h(0)^2 / r`` part of the latter is integrated exactly.
    """
    if r_lo <= 0:
        raise HorizonContact("naive law diverges at the horizon")
    if r_hi <= r_lo:
        return 0.0, 0.0
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    I1 = integrate.quad(lambda r: 2.0 * _hazard(r), r_lo, r_hi, **opts)[0]
    I2 = integrate.quad(lambda r: (_hazard(r) ** 2 - TWO_OVER_PI) / r, r_lo, r_hi, **opts)[0]
    var = 2.0 * (TWO_OVER_PI * math.log(r_hi / r_lo) + I2)
    return I1 - 0.5 * var, var


def _piecewise_quad(f, t, s, breakpoints):
    """Integrate a scalar function over ``[t, s]`` split at breakpoints.

    Gauss-Kronrod never samples the endpoints, so right-continuous jumps at
    the piece boundaries do no harm.
    """
    cuts = np.unique(np.concatenate([[t, s], breakpoints[(breakpoints > t) & (breakpoints < s)]]))
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return total


def _zero_investment_moments(strategy, model, t, horizon):
    theta = strategy.theta
    if theta is None or horizon == t:
        return 0.0, 0.0
    bp = np.union1d(model.breakpoints, theta.breakpoints)

    def drift(u):
        b, sig = model.coefficients(u)
        th = theta(u)
        sv = sig.T @ th
        return float(b @ th - 0.5 * sv @ sv)

    def var(u):
        _, sig = model.coefficients(u)
        sv = sig.T @ theta(u)
        return float(sv @ sv)

    return _piecewise_quad(drift, t, horizon, bp), _piecewise_quad(var, t, horizon, bp)


def _check_times(kelly, t, horizon):
    T = kelly.horizon
    horizon = T if horizon is None else float(horizon)
    if not 0.0 <= t < horizon <= T:
        raise OutOfRange(f"need 0 <= t < horizon <= T, got t={t}, horizon={horizon}")
    return horizon


def strategy_law(strategy, kelly, t, x, horizon=None):
    """Shifted-lognormal law of ``X(horizon)`` started from ``(t, x)``."""
    horizon = _check_times(kelly, t, horizon)
    params = proportional_params(strategy)
    if params is not None:
        c, k = params
        if isinstance(strategy, FractionalKelly):
            if x <= 0:
                raise NonPositiveWealth("fractional Kelly needs positive wealth")
        elif x <= c:
            raise BelowFloor(f"wealth must exceed xi={c}")
        V = kelly.variance(t, horizon)
        return ShiftedLognormal(c, float(x), (k - 0.5 * k * k) * V, k * math.sqrt(V))
    if isinstance(strategy, Naive):
        if x <= strategy.xi:
            raise BelowFloor(f"wealth must exceed xi={strategy.xi}")
        if horizon >= kelly.horizon:
            raise HorizonContact("the naive law is only defined strictly before T")
        r_hi = math.sqrt(kelly.variance(t))
        r_lo = math.sqrt(kelly.variance(horizon))
        m, var = naive_log_moments(r_hi, r_lo)
        return ShiftedLognormal(strategy.xi, float(x), m, math.sqrt(var))
    if isinstance(strategy, ZeroInvestment):
        m, var = _zero_investment_moments(strategy, kelly.model, t, horizon)
        return ShiftedLognormal(strategy.anchor_x, float(x), m, math.sqrt(var))
    raise UnsupportedStrategy(f"no closed-form law for {type(strategy).__name__}")


# ---------------------------------------------------------------------------
# pre-committed plan


def precommitted_lower_probability(state, t, x, kelly):
    """Probability, seen from ``(t, x)``, that the time-0 plan ends at the floor."""
    if t == 0.0:
        if not math.isclose(x, state.x0, rel_tol=1e-12):
            raise OutOfBand("at t=0 the plan is only defined at its anchor wealth")
        return 0.5
    V_t = kelly.variance(t)
    u = (x - state.xi) / state.k_star
    if not 0.0 < u < 1.0:
        raise OutOfBand(f"wealth must lie in ({state.xi}, {state.cap})")
    z0 = V_t + math.sqrt(V_t) * float(norm_ppf(u))
    return float(norm_cdf(-z0 / math.sqrt(V_t)))


def precommitted_median(xi, k_star, t, x, x0, V_t=None, alpha=0.5):
    """Alpha-quantile (median by default) of terminal wealth under the time-0
    pre-committed plan, seen from ``(t, x)``.

    The plan ends at ``xi + k*`` exactly when ``Z(T) >= 0``. At ``t > 0`` that
    happens with probability ``Phi(z0 / sqrt(V_t))``, so the median is the cap
    iff ``x >= xi + k* Phi(-sqrt(V_t))``.
    """
    _check_alpha(alpha)
    if not xi < x < xi + k_star:
        raise OutOfBand(f"wealth must lie in ({xi}, {xi + k_star})")
    if t == 0.0:
        p_low = 0.5 if math.isclose(x, x0, rel_tol=1e-12) else None
        if p_low is None:
            raise OutOfBand("at t=0 the plan is only defined at its anchor wealth")
    else:
        if V_t is None:
            raise ValueError("V_t is required for t > 0")
        z0 = V_t + math.sqrt(V_t) * float(norm_ppf((x - xi) / k_star))
        p_low = float(norm_cdf(-z0 / math.sqrt(V_t)))
    # sup{y : F(y) <= alpha}: the lower atom alone is at most alpha -> cap
    return xi + k_star if p_low <= alpha else xi


def precommitted_vs_equilibrium_threshold(xi, x0, t, V_t, V_0):
    """``e^{-V_t/2} / Phi(-sqrt(V_0))``; lies strictly between 1 and ``k*/(x0 - xi)``."""
    if not V_0 > 0 or V_t < 0 or V_t > V_0:
        raise ValueError("need 0 <= V_t <= V_0 and V_0 > 0")
    a = math.exp(-0.5 * V_t) / float(norm_cdf(-math.sqrt(V_0)))
    upper = 1.0 / float(norm_cdf(-math.sqrt(V_0)))
    if t > 0 and not 1.0 < a <= upper:
        raise ValidationError(f"threshold {a} escaped (1, {upper})")
    return a


def precommitted_quantile(state, kelly, t, x, alpha, horizon=None):
    horizon = _check_times(kelly, t, horizon)
    _check_alpha(alpha)
    if horizon == kelly.horizon:
        p_low = precommitted_lower_probability(state, t, x, kelly)
        return state.cap if p_low <= alpha else state.xi
    V_t, V_h = kelly.variance(t), kelly.variance(horizon)
    u = (x - state.xi) / state.k_star
    if t == 0.0:
        u = (state.x0 - state.xi) / state.k_star
    if not 0.0 < u < 1.0:
        raise OutOfBand(f"wealth must lie in ({state.xi}, {state.cap})")
    z0 = V_t + math.sqrt(V_t) * float(norm_ppf(u))
    z = z0 + math.sqrt(V_t - V_h) * float(norm_ppf(alpha))
    return state.xi + state.k_star * float(norm_cdf((z - V_h) / math.sqrt(V_h)))


# ---------------------------------------------------------------------------
# generic entry points


@dataclass(frozen=True)
class QuantileQuery:
    t: float
    x: float
    alpha: float
    horizon: float | None = None

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.horizon is not None and not 0.0 <= self.t < self.horizon:
            raise OutOfRange("need 0 <= t < horizon")


@dataclass(frozen=True)
class QuantileResult:
    value: float
    method: str
    stderr: float = 0.0


def quantile(strategy, kelly, t, x, alpha, horizon=None):
    """Closed-form alpha-quantile of ``X(horizon)`` from ``(t, x)``."""
    _check_alpha(alpha)
    if isinstance(strategy, PreCommitted):
        state = PreCommittedState.build(strategy.xi, strategy.anchor_x, kelly)
        return precommitted_quantile(state, kelly, t, x, alpha, horizon)
    return strategy_law(strategy, kelly, t, x, horizon).quantile(alpha)


def evaluate(query, strategy, kelly):
    return QuantileResult(quantile(strategy, kelly, query.t, query.x, query.alpha, query.horizon), "closed_form")


def naive_running_median(xi, t, x, tau, model, kelly):
    """Median of ``X(tau)`` under the naive strategy started from ``(t, x)``."""
    if x <= xi:
        raise BelowFloor(f"wealth must exceed xi={xi}")
    T = model.horizon
    if tau >= T:
        raise HorizonContact("tau = T is the limit; the running median tends to xi")
    if not 0.0 <= t <= tau:
        raise OutOfRange("need 0 <= t <= tau < T")
    if tau == t:
        return float(x)
    m, _ = naive_log_moments(math.sqrt(kelly.variance(t)), math.sqrt(kelly.variance(tau)))
    return xi + (x - xi) * math.exp(m)


# ---------------------------------------------------------------------------
# deviation rates


@dataclass(frozen=True)
class DeviationRate:
    value: float
    phi_hat: float
    phi_pi: float
    F_y: float
    quantile: float


def deviation_objective(derivs, b, sig, v):
    """``F_x b'v + F_xx |sigma'v|^2 / 2``."""
    sv = sig.T @ v
    return derivs.F_x * float(b @ v) + 0.5 * derivs.F_xx * float(sv @ sv)


def deviation_rate(strategy, alpha, t, x, pi, kelly, model=None, horizon=None):
    """Right derivative in ``eps`` of the alpha-quantile when ``pi`` is held on
    ``[t, t + eps)`` and ``strategy`` is followed afterwards."""
    if isinstance(strategy, ZeroInvestment):
        raise UnsupportedStrategy("zero investment has a degenerate law; use zero_investment_quantile_shift")
    if isinstance(strategy, (GeneralAffine, PreCommitted)):
        raise UnsupportedStrategy(f"no smooth closed-form law for {type(strategy).__name__}")
    model = kelly.model if model is None else model
    law = strategy_law(strategy, kelly, t, x, horizon)
    G = law.quantile(alpha)
    d = law.derivatives(G)
    if not d.F_y > 0:
        raise DegenerateQuantile("F_y vanishes at the quantile")
    b, sig = model.coefficients(t)
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    pi_hat = allocation(strategy, kelly, t, x)
    phi_hat = deviation_objective(d, b, sig, pi_hat)
    phi_pi = deviation_objective(d, b, sig, pi)
    return DeviationRate(value=(phi_hat - phi_pi) / d.F_y, phi_hat=phi_hat, phi_pi=phi_pi, F_y=d.F_y, quantile=G)


@dataclass(frozen=True)
class ZeroInvestmentShift:
    F_at_status_quo: float
    at_or_below: bool
    eps_star: float


def zero_investment_quantile_shift(alpha, pi, t, eps, model):
    """Effect of holding ``pi`` on ``[t, t + eps)`` from the status quo.

    Afterwards the zero-investment rule keeps the sign of ``X - x0``, so the
    deviated law puts mass ``Phi(-mean/sd)`` at or below ``x0``. The alpha
    quantile stays at or below ``x0`` while that mass exceeds ``alpha``;
    ``eps_star`` is the first ``eps`` where it stops doing so (``inf`` if never
    within the horizon).
    """
    _check_alpha(alpha)
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    T = model.horizon
    if not 0.0 <= t < T or not 0.0 < eps <= T - t:
        raise OutOfRange("need 0 <= t < t + eps <= T")
    bp = model.breakpoints

    def moments(e):
        mu = _piecewise_quad(lambda u: float(model.coefficients(u)[0] @ pi), t, t + e, bp)
        var = _piecewise_quad(lambda u: float(np.sum((model.coefficients(u)[1].T @ pi) ** 2)), t, t + e, bp)
        return mu, var

    mu, var = moments(eps)
    if not var > 0:
        raise ZeroDeviation("deviation carries no risk")
    F = float(norm_cdf(-mu / math.sqrt(var)))
    target = -float(norm_ppf(alpha))

    def gap(e):
        m_, v_ = moments(e)
        return m_ / math.sqrt(v_) - target

    if np.all([gap(e) < 0 for e in np.linspace(T - t, 0, 65)[:-1]]):
        eps_star = math.inf
    elif gap(1e-12 * (T - t)) >= 0:
        eps_star = 0.0
    else:
        grid = np.linspace(0.0, T - t, 257)[1:]
        vals = [gap(e) for e in grid]
        k = next(i for i, g in enumerate(vals) if g >= 0)
        lo = grid[k - 1] if k > 0 else 1e-12 * (T - t)
        eps_star = optimize.brentq(gap, lo, grid[k], xtol=1e-14, rtol=1e-13)
    return ZeroInvestmentShift(F_at_status_quo=F, at_or_below=F > alpha, eps_star=eps_star)


# ---------------------------------------------------------------------------
# multi-time objective


@dataclass(frozen=True, eq=False)
class MultiTimeObjective:
    """Weighted quantiles at dates ``T_1 < ... < T_N = T``.

    ``weights[n-1, i-1]`` is the weight on date ``T_i`` for a current time in
    ``[T_{n-1}, T_n)``; only ``i >= n`` may be non-zero.
    """

    dates: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype=float)
        N = dates.size
        rows = [np.asarray(r, dtype=float) for r in self.weights]
        if len(rows) != N:
            raise WeightRowMismatch(f"need {N} weight rows, got {len(rows)}")
        W = np.zeros((N, N))
        for n, row in enumerate(rows):
            if row.size == N - n:
                W[n, n:] = row
            elif row.size == N:
                if np.any(row[:n] != 0):
                    raise WeightRowMismatch(f"row {n + 1} puts weight on past dates")
                W[n] = row
            else:
                raise WeightRowMismatch(f"row {n + 1} has {row.size} entries")
        if np.any(W < 0) or not np.allclose(W.sum(axis=1), 1.0, atol=1e-12) or np.any(W[:, -1] <= 0):
            raise WeightRowMismatch("weights must be non-negative, sum to one, and weight the horizon")
        if N == 0 or np.any(np.diff(dates) <= 0) or dates[0] <= 0:
            raise WeightRowMismatch("dates must be positive and strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "weights", W)

    @classmethod
    def single(cls, horizon):
        return cls(np.array([horizon]), [[1.0]])

    def row_index(self, t):
        n = int(np.searchsorted(self.dates, t, side="right"))
        if n >= self.dates.size:
            raise OutOfRange(f"t={t} at or beyond the last date")
        return n

    def active_terms(self, t):
        n = self.row_index(t)
        return [(float(self.dates[i]), float(self.weights[n, i])) for i in range(n, self.dates.size) if self.weights[n, i] > 0]


def multi_time_objective(obj, strategy, t, x, alpha, kelly, mc_config=None):
    """``J = sum_i w_{n,i} G(t, x, alpha; T_i)``; closed form where available,
    otherwise Monte Carlo with ``mc_config`` (100k paths by default)."""
    if abs(obj.dates[-1] - kelly.horizon) > 1e-12:
        raise WeightRowMismatch("last date must equal the market horizon")
    terms = obj.active_terms(t)
    try:
        return float(sum(w * quantile(strategy, kelly, t, x, alpha, Ti) for Ti, w in terms))
    except UnsupportedStrategy:
        pass
    from .simulator import SimConfig, empirical_quantile, simulate

    cfg = mc_config or SimConfig(num_paths=100_000, seed=0)
    cfg = cfg.with_record_times([Ti for Ti, _ in terms])
    batch = simulate(strategy, kelly.model, kelly, t, x, cfg)
    return float(sum(w * empirical_quantile(batch, j, alpha) for j, (_, w) in enumerate(terms)))
