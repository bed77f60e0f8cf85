"""Monte Carlo simulation of (discounted) wealth under a strategy.

Two schemes:

* ``exact``: for rules ``k(t) v*(t)(x - c)`` (equilibrium, scaled insurance,
  fractional Kelly, naive) and zero investment, ``ln(X - c)`` has Gaussian
  increments, and the pre-committed plan is a function of the Gaussian
  driver ``Z = int v*' sigma dW``. Nothing is discretised.
* ``log_euler``: Euler-Maruyama on wealth itself, for any strategy. Insurance
  floors can be crossed by a discrete step; such paths are clamped just above
  the floor and counted.

Paths are split into fixed-size chunks and every chunk draws its normals from
a counter-based stream addressed by ``(seed, chunk, interval, column)``, so a
batch is bit-identical whatever the number of threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .errors import (
    EmptyBatch,
    FloorBreach,
    InfeasibleDeviation,
    OutOfBand,
    OutOfRange,
    QuantfolioError,
    SchemeUnavailable,
)
from .normal import norm_cdf, norm_ppf
from .quantile import MultiTimeObjective, _piecewise_quad, naive_log_moments
from .rng import chunk_normals
from .strategies import (
    Equilibrium,
    GeneralAffine,
    Naive,
    PreCommitted,
    PreCommittedState,
    ZeroInvestment,
    allocation,
    floor_of,
    naive_delta,
    proportional_params,
)

SCHEMES = ("exact", "log_euler")


def resolve_threads(threads=None):
    if threads:
        return max(1, int(threads))
    env = os.environ.get("QUANTFOLIO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SimConfig:
    num_paths: int = 100_000
    seed: int = 0
    scheme: str = "exact"
    step: float = 1.0 / 252.0
    record_times: tuple = ()
    antithetic: bool = False
    chunk_size: int = 65_536
    threads: int | None = None
    naive_cutoff: float = 1e-4
    floor_gap: float = 1e-12

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.chunk_size < 2 or self.chunk_size % 2:
            raise ValueError("chunk_size must be a positive even number")
        object.__setattr__(self, "record_times", tuple(float(r) for r in self.record_times))

    def with_record_times(self, times):
        return replace(self, record_times=tuple(times))


@dataclass(frozen=True)
class Deviation:
    """Hold the dollar vector ``pi`` on ``[t0, t0 + eps)``."""

    pi: np.ndarray
    eps: float


@dataclass(frozen=True, eq=False)
class PathBatch:
    wealth: np.ndarray
    record_times: np.ndarray
    t0: float
    x0: float
    breach_fraction: float = 0.0
    scheme: str = "exact"

    @property
    def num_paths(self):
        return self.wealth.shape[0]

    def terminal(self):
        return self.wealth[:, -1]

    def column(self, time):
        idx = np.flatnonzero(np.isclose(self.record_times, time, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise OutOfRange(f"time {time} was not recorded")
        return self.wealth[:, idx[0]]


# ---------------------------------------------------------------------------
# time grid and interval laws


def _time_grid(strategy, kelly, t0, config, window):
    T = kelly.horizon
    rec = np.array(config.record_times or (T,), dtype=float)
    if np.any(rec < t0) or np.any(rec > T):
        raise OutOfRange("record times must lie in [t0, T]")
    pts = [np.array([t0, T]), rec, kelly.model.breakpoints]
    if isinstance(strategy, ZeroInvestment) and strategy.theta is not None:
        pts.append(strategy.theta.breakpoints)
    if window is not None:
        pts.append(np.array([t0 + window]))
    if isinstance(strategy, Naive):
        pts.append(np.array([T - config.naive_cutoff]))
    if config.scheme == "log_euler":
        pts.append(np.arange(t0, T, config.step))
    grid = np.unique(np.concatenate(pts))
    grid = grid[(grid >= t0) & (grid <= T)]
    # merge points closer than float noise
    keep = np.concatenate([[True], np.diff(grid) > 1e-13])
    return grid[keep], np.sort(np.unique(rec))


def _loading(strategy, kelly, config):
    """``w(u)``: dollars per unit of ``X - c`` held at time ``u``."""
    T = kelly.horizon
    params = proportional_params(strategy)
    if params is not None:
        return lambda u: params[1] * kelly.v_star(u)
    if isinstance(strategy, Naive):
        cut = T - config.naive_cutoff

        def w(u):
            if u >= cut:
                return np.zeros(kelly.model.num_assets)
            return naive_delta(kelly.variance(u)) * kelly.v_star(u)

        return w
    if isinstance(strategy, ZeroInvestment):
        m = kelly.model.num_assets
        return (lambda u: np.zeros(m)) if strategy.theta is None else strategy.theta
    if isinstance(strategy, PreCommitted):
        return kelly.v_star
    raise SchemeUnavailable(f"no exact scheme for {type(strategy).__name__}")


@dataclass
class _IntervalLaw:
    drift: float
    sd: float
    # deviation window only: mean and Cholesky loadings of int pi' dS
    pi_mean: float = 0.0
    pi_l1: float = 0.0
    pi_l2: float = 0.0


def _interval_laws(strategy, kelly, grid, config, deviation, t0):
    model = kelly.model
    T = kelly.horizon
    params = proportional_params(strategy)
    w = _loading(strategy, kelly, config)
    laws = []
    for a, b in zip(grid[:-1], grid[1:]):
        if params is not None:
            k = params[1]
            g = kelly.variance(a, b)
            drift, var = (k - 0.5 * k * k) * g, k * k * g
        elif isinstance(strategy, PreCommitted):
            drift, var = 0.0, kelly.variance(a, b)
        elif isinstance(strategy, Naive):
            if a >= T - config.naive_cutoff - 1e-15:
                drift, var = 0.0, 0.0
            else:
                drift, var = naive_log_moments(math.sqrt(kelly.variance(a)), math.sqrt(kelly.variance(b)))
        else:

            def dr(u):
                bb, sig = model.coefficients(u)
                wu = w(u)
                sv = sig.T @ wu
                return float(bb @ wu - 0.5 * sv @ sv)

            def vr(u):
                sv = model.coefficients(u)[1].T @ w(u)
                return float(sv @ sv)

            drift, var = _piecewise_quad(dr, a, b, np.empty(0)), _piecewise_quad(vr, a, b, np.empty(0))
        law = _IntervalLaw(drift=drift, sd=math.sqrt(max(var, 0.0)))
        if deviation is not None and a < t0 + deviation.eps - 1e-15:
            pi = deviation.pi

            def mean_pi(u):
                return float(model.coefficients(u)[0] @ pi)

            def var_pi(u):
                sv = model.coefficients(u)[1].T @ pi
                return float(sv @ sv)

            def cov(u):
                sig = model.coefficients(u)[1]
                return float((sig.T @ w(u)) @ (sig.T @ pi))

            none = np.empty(0)
            law.pi_mean = _piecewise_quad(mean_pi, a, b, none)
            vpi = _piecewise_quad(var_pi, a, b, none)
            c = _piecewise_quad(cov, a, b, none)
            law.pi_l1 = c / law.sd if law.sd > 0 else 0.0
            law.pi_l2 = math.sqrt(max(vpi - law.pi_l1**2, 0.0))
        laws.append(law)
    return laws


# ---------------------------------------------------------------------------
# chunk kernels


def _record_slots(grid, rec):
    slots = {}
    for j, r in enumerate(rec):
        i = int(np.argmin(np.abs(grid - r)))
        slots.setdefault(i, []).append(j)
    return slots


def _exact_chunk(strategy, kelly, x0, grid, rec, laws, config, deviation, chunk, n, pc_state):
    slots = _record_slots(grid, rec)
    out = np.empty((n, rec.size))
    X = np.full(n, float(x0))
    T = kelly.horizon
    for j in slots.get(0, []):
        out[:, j] = X
    t0 = grid[0]
    params = proportional_params(strategy)
    shift = params[0] if params else (strategy.xi if isinstance(strategy, Naive) else None)
    if isinstance(strategy, ZeroInvestment):
        shift = strategy.anchor_x
    insurance = floor_of(strategy) is not None
    if isinstance(strategy, PreCommitted):
        V_t = kelly.variance(t0)
        u = (x0 - pc_state.xi) / pc_state.k_star
        if not 0.0 < u < 1.0:
            raise OutOfBand(f"wealth must lie in ({pc_state.xi}, {pc_state.cap})")
        Z = np.full(n, V_t + math.sqrt(V_t) * float(norm_ppf(u)))
    for i, (a, b) in enumerate(zip(grid[:-1], grid[1:])):
        law = laws[i]
        N1 = chunk_normals(config.seed, chunk, i, 0, n, config.antithetic)
        if deviation is not None and a < t0 + deviation.eps - 1e-15:
            N2 = chunk_normals(config.seed, chunk, i, 1, n, config.antithetic)
            X = X + law.pi_mean + law.pi_l1 * N1 + law.pi_l2 * N2
        elif isinstance(strategy, PreCommitted):
            Z = Z + law.sd * N1
            if b >= T:
                X = np.where(Z >= 0.0, pc_state.cap, pc_state.xi)
            else:
                V_b = kelly.variance(b)
                X = pc_state.xi + pc_state.k_star * norm_cdf((Z - V_b) / math.sqrt(V_b))
        elif law.sd > 0 or law.drift != 0:
            growth = np.exp(law.drift + law.sd * N1)
            if insurance:
                # clamped extension: nothing is held at or below the floor
                X = np.where(X > shift, shift + (X - shift) * growth, X)
            else:
                X = shift + (X - shift) * growth
        for j in slots.get(i + 1, []):
            out[:, j] = X
    return out, 0


def _euler_chunk(strategy, kelly, x0, grid, rec, config, deviation, chunk, n, pc_state):
    model = kelly.model
    slots = _record_slots(grid, rec)
    out = np.empty((n, rec.size))
    X = np.full(n, float(x0))
    for j in slots.get(0, []):
        out[:, j] = X
    t0 = grid[0]
    T = kelly.horizon
    d = model.num_factors
    xi = floor_of(strategy)
    breached = np.zeros(n, dtype=bool)
    for i, (a, b) in enumerate(zip(grid[:-1], grid[1:])):
        h = b - a
        bb, sig = model.coefficients(a)
        in_window = deviation is not None and a < t0 + deviation.eps - 1e-15
        if in_window:
            pi = np.broadcast_to(deviation.pi, (n, deviation.pi.size))
        elif isinstance(strategy, Naive) and a >= T - config.naive_cutoff - 1e-15:
            pi = None
        else:
            pi = allocation(strategy, kelly, a, X, strict=False, precommitted_state=pc_state)
        if pi is not None:
            dW = np.column_stack([chunk_normals(config.seed, chunk, i, c, n, config.antithetic) for c in range(d)])
            X_new = X + h * (pi @ bb) + math.sqrt(h) * np.einsum("ij,ij->i", pi @ sig, dW)
            if xi is not None and not in_window:
                hit = (X > xi) & (X_new <= xi)
                breached |= hit
                X_new = np.where(hit, xi + config.floor_gap, X_new)
            X = X_new
        for j in slots.get(i + 1, []):
            out[:, j] = X
    return out, int(breached.sum())


def simulate(strategy, model, kelly, t0, x0, config, deviation=None, window=None):
    """Simulate wealth from ``(t0, x0)`` and record it at ``config.record_times``
    (default: the horizon).

    ``deviation`` splices a constant dollar holding on ``[t0, t0 + eps)``.
    ``window`` only adds ``t0 + window`` to the time grid so that a baseline
    run consumes exactly the same normals as a spliced one.
    """
    if model is not None and model is not kelly.model:
        raise ValueError("model must be the one the Kelly curve was built on")
    T = kelly.horizon
    if not 0.0 <= t0 < T:
        raise OutOfRange(f"t0={t0} outside [0, {T})")
    if deviation is not None:
        deviation = Deviation(np.atleast_1d(np.asarray(deviation.pi, dtype=float)), float(deviation.eps))
        window = deviation.eps
        if not 0.0 < window <= T - t0:
            raise OutOfRange("deviation window must fit before the horizon")
    if config.scheme == "exact":
        if isinstance(strategy, GeneralAffine):
            raise SchemeUnavailable("general affine strategies need the log_euler scheme")
        if deviation is not None and isinstance(strategy, PreCommitted):
            raise SchemeUnavailable("spliced pre-committed runs need the log_euler scheme")
    pc_state = None
    if isinstance(strategy, PreCommitted):
        pc_state = PreCommittedState.build(strategy.xi, strategy.anchor_x, kelly)
    grid, rec = _time_grid(strategy, kelly, t0, config, window)
    laws = None
    if config.scheme == "exact":
        laws = _interval_laws(strategy, kelly, grid, config, deviation, t0)

    sizes = []
    left = config.num_paths
    while left > 0:
        sizes.append(min(config.chunk_size, left))
        left -= sizes[-1]

    def run(c):
        if config.scheme == "exact":
            return _exact_chunk(strategy, kelly, x0, grid, rec, laws, config, deviation, c, sizes[c], pc_state)
        return _euler_chunk(strategy, kelly, x0, grid, rec, config, deviation, c, sizes[c], pc_state)

    workers = min(resolve_threads(config.threads), len(sizes))
    if workers == 1:
        parts = [run(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    wealth = np.concatenate([p[0] for p in parts], axis=0)
    wealth.setflags(write=False)
    breaches = sum(p[1] for p in parts)
    return PathBatch(
        wealth=wealth,
        record_times=rec,
        t0=float(t0),
        x0=float(x0),
        breach_fraction=breaches / config.num_paths,
        scheme=config.scheme,
    )


# ---------------------------------------------------------------------------
# empirical quantiles and their standard errors


def _order_index(n, alpha):
    if not 0.0 < alpha < 1.0:
        raise OutOfRange("alpha must lie in (0, 1)")
    # ceil(alpha n), guarding against products like 0.1 * 30 = 3.0000000000000004
    return max(1, math.ceil(round(alpha * n, 9)))


def _values(batch, time_index):
    if isinstance(batch, PathBatch):
        v = batch.wealth[:, time_index]
    else:
        v = np.asarray(batch, dtype=float)
        if v.ndim == 2:
            v = v[:, time_index]
    if v.size == 0:
        raise EmptyBatch("no paths")
    return v


def empirical_quantile(batch, time_index, alpha):
    """The ``ceil(alpha n)``-th smallest value (right-continuous convention)."""
    v = _values(batch, time_index)
    k = _order_index(v.size, alpha)
    return float(np.partition(v, k - 1)[k - 1])


def quantile_stderr(values, alpha, resamples=None, seed=0):
    """Bootstrap standard error of the empirical alpha-quantile.

    With ``resamples=None`` the bootstrap law of the order statistic is used
    exactly: resampled ``X*_(k) <= x_(j)`` iff at least ``k`` of ``n`` draws
    land in the ``j`` smallest values, a binomial event.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        raise EmptyBatch("no paths")
    k = _order_index(n, alpha)
    if resamples is not None:
        rng = np.random.default_rng(seed)
        qs = [np.partition(v[rng.integers(0, n, n)], k - 1)[k - 1] for _ in range(resamples)]
        return float(np.std(qs, ddof=1))
    half = int(math.ceil(10.0 * math.sqrt(n * alpha * (1 - alpha)))) + 10
    lo, hi = max(1, k - half), min(n, k + half)
    part = np.partition(v, [lo - 1, hi - 1])
    window = np.sort(part[lo - 1 : hi])
    j = np.arange(lo - 1, hi + 1)
    cdf = stats.binom.sf(k - 1, n, j / n)
    mass = np.diff(cdf)
    mass = mass / mass.sum()
    mean = float(mass @ window)
    return float(math.sqrt(max(mass @ (window - mean) ** 2, 0.0)))


def _weighted_quantiles(M, alpha, weights):
    n = M.shape[0]
    k = _order_index(n, alpha)
    return sum(w * np.partition(M[:, j], k - 1)[k - 1] for j, w in enumerate(weights))


def paired_diff_stderr(base, dev, alpha, weights=None, resamples=200, seed=0):
    """Bootstrap standard error of ``J(dev) - J(base)`` resampling whole paths.

    ``base`` and ``dev`` are ``n`` or ``n x K`` arrays; ``J`` is the weighted sum
    of the column quantiles (a single quantile for vectors).
    """
    base = np.asarray(base, dtype=float).reshape(len(base), -1)
    dev = np.asarray(dev, dtype=float).reshape(len(dev), -1)
    weights = np.ones(base.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    n = base.shape[0]
    rng = np.random.default_rng(seed)
    diffs = np.empty(resamples)
    for r in range(resamples):
        idx = rng.integers(0, n, n)
        diffs[r] = _weighted_quantiles(dev[idx], alpha, weights) - _weighted_quantiles(base[idx], alpha, weights)
    return float(np.std(diffs, ddof=1))


# ---------------------------------------------------------------------------
# perturbation experiments


@dataclass(frozen=True)
class PerturbationResult:
    eps: float
    alpha: float
    q_base: float
    q_perturbed: float
    diff: float
    stderr: float
    rate_estimate: float

    @property
    def z_score(self):
        if self.stderr > 0:
            return self.diff / self.stderr
        return 0.0 if self.diff == 0 else math.copysign(math.inf, self.diff)


def _check_deviation(pi, model):
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    if pi.size != model.num_assets:
        raise InfeasibleDeviation(f"deviation has {pi.size} entries, market has {model.num_assets} assets")
    if not model.constraint.is_feasible(pi, tol=1e-12):
        raise InfeasibleDeviation("deviation violates the cone constraint")
    return pi


def _is_own_holding(strategy, kelly, t, x, pi):
    try:
        own = allocation(strategy, kelly, t, x, strict=False)
    except QuantfolioError:
        return False
    return bool(np.allclose(pi, own, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(own))))))


def _spliced_pair(strategy, kelly, t, x, pi, eps, config, times):
    cfg = config.with_record_times(times)
    base = simulate(strategy, kelly.model, kelly, t, x, cfg, window=eps)
    if _is_own_holding(strategy, kelly, t, x, pi):
        # deviating to the current holding is no deviation: same paths
        return base, base
    dev = simulate(strategy, kelly.model, kelly, t, x, cfg, deviation=Deviation(pi, eps))
    return base, dev


def _result(base, dev, alpha, weights, eps, resamples, seed):
    qb = _weighted_quantiles(base.wealth, alpha, weights)
    qd = _weighted_quantiles(dev.wealth, alpha, weights)
    se = 0.0 if dev is base else paired_diff_stderr(base.wealth, dev.wealth, alpha, weights, resamples, seed)
    diff = float(qd - qb)
    return PerturbationResult(
        eps=float(eps), alpha=float(alpha), q_base=float(qb), q_perturbed=float(qd),
        diff=diff, stderr=se, rate_estimate=diff / eps,
    )


def perturbation_test(strategy, alpha, t, x, pi, eps_list, config, kelly, resamples=200):
    """Quantile change from holding ``pi`` dollars on ``[t, t + eps)`` and
    following ``strategy`` afterwards, under common random numbers.

    A deviation equal to the strategy's own holding at ``(t, x)`` is treated
    as no deviation and returns ``diff = 0`` exactly.
    """
    pi = _check_deviation(pi, kelly.model)
    T = kelly.horizon
    out = []
    for eps in eps_list:
        base, dev = _spliced_pair(strategy, kelly, t, x, pi, eps, config, (T,))
        out.append(_result(base, dev, alpha, [1.0], eps, resamples, config.seed))
    return out


def multi_time_perturbation_test(obj, strategy, alpha, t, x, pi, eps, config, kelly, resamples=200):
    """As :func:`perturbation_test` with the weighted multi-date objective."""
    if not isinstance(obj, MultiTimeObjective):
        raise TypeError("obj must be a MultiTimeObjective")
    pi = _check_deviation(pi, kelly.model)
    terms = obj.active_terms(t)
    if t + eps > terms[0][0] + 1e-15:
        raise OutOfRange("deviation window must end before the next objective date")
    times = [Ti for Ti, _ in terms]
    weights = [w for _, w in terms]
    base, dev = _spliced_pair(strategy, kelly, t, x, pi, eps, config, times)
    return _result(base, dev, alpha, weights, eps, resamples, config.seed)


@dataclass(frozen=True)
class RateFit:
    rate: float
    stderr: float
    slope: float


def extrapolate_rate(results):
    """Weighted least-squares fit ``diff/eps = rate + slope eps``; ``rate`` is
    the eps -> 0 extrapolation."""
    eps = np.array([r.eps for r in results])
    y = np.array([r.rate_estimate for r in results])
    se = np.array([r.stderr / r.eps for r in results])
    if eps.size == 1:
        return RateFit(float(y[0]), float(se[0]), 0.0)
    w = 1.0 / np.maximum(se, 1e-300) ** 2 if np.all(se > 0) else np.ones_like(y)
    A = np.column_stack([np.ones_like(eps), eps])
    cov = np.linalg.inv(A.T @ (w[:, None] * A))
    coef = cov @ (A.T @ (w * y))
    return RateFit(float(coef[0]), float(math.sqrt(cov[0, 0])) if np.all(se > 0) else 0.0, float(coef[1]))


def boundary_deviation_test(xi, t, eps, config, kelly):
    """Start exactly at the floor, hold ``v*(t)`` dollars for ``eps``, then
    follow the clamped equilibrium. The baseline never leaves ``xi``."""
    strategy = Equilibrium(xi)
    T = kelly.horizon
    cfg = config.with_record_times((T,))
    base = simulate(strategy, kelly.model, kelly, t, xi, cfg, window=eps)
    dev = simulate(strategy, kelly.model, kelly, t, xi, cfg, deviation=Deviation(kelly.v_star(t), eps))
    qb = empirical_quantile(base, 0, 0.5)
    qd = empirical_quantile(dev, 0, 0.5)
    se = quantile_stderr(dev.terminal(), 0.5)
    return PerturbationResult(
        eps=float(eps), alpha=0.5, q_base=qb, q_perturbed=qd, diff=qd - qb, stderr=se, rate_estimate=(qd - qb) / eps,
    )


def smallest_significant_eps(xi, t, eps_list, config, kelly, z=5.0):
    """Smallest ``eps`` whose boundary deviation is significant at ``z`` sigma."""
    hits = [e for e in eps_list if boundary_deviation_test(xi, t, e, config, kelly).z_score >= z]
    return min(hits) if hits else None


@dataclass(frozen=True)
class LogUtilityEstimate:
    mean: float
    stderr: float


def log_utility_estimate(strategy, xi, config, kelly, x0, t0=0.0):
    """Monte Carlo ``E[ln(X(T) - xi)]``."""
    batch = simulate(strategy, kelly.model, kelly, t0, x0, config.with_record_times((kelly.horizon,)))
    gap = batch.terminal() - xi
    if np.any(gap <= 0):
        raise FloorBreach(f"{int(np.sum(gap <= 0))} paths end at or below the floor")
    logs = np.log(gap)
    return LogUtilityEstimate(float(logs.mean()), float(logs.std(ddof=1) / math.sqrt(logs.size)))
