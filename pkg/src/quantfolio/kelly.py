"""Cone-constrained Kelly portfolio.

At each time the growth-optimal proportion ``v*`` solves

    min_v  0.5 v' S v - b' v   subject to  Q v >= 0,      S = sigma sigma'

with a primal active-set method. For SPD ``S`` the minimiser is unique and the
KKT multipliers come out of the last working-set solve, which is what the
diagnostics report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IdentityViolation, MaxIterationsExceeded, SingularSigma
from .market import integrate_squared_kelly_vol


@dataclass(frozen=True, eq=False)
class QPSolution:
    v_star: np.ndarray
    active_set: tuple
    multipliers: np.ndarray
    objective: float
    iterations: int
    stationarity: float
    complementarity: float


def _check_sigma(Sigma):
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise SingularSigma("Sigma must be square")
    if not np.allclose(Sigma, Sigma.T, rtol=1e-12, atol=1e-14):
        raise SingularSigma("Sigma must be symmetric")
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularSigma("Sigma is not positive definite") from exc
    if np.min(np.diag(L)) <= 0:
        raise SingularSigma("Sigma is not positive definite")
    return Sigma


def _independent_rows(Q, rows):
    """Drop rows (newest first) that are linearly dependent on earlier ones."""
    kept = []
    for i in rows:
        trial = kept + [i]
        if np.linalg.matrix_rank(Q[trial], tol=1e-12) == len(trial):
            kept = trial
    return kept


def _eqp_step(Sigma, g, A):
    """Solve min 0.5 p'Sp + g'p s.t. A p = 0; return (p, lam) with S p - A' lam = -g."""
    m = Sigma.shape[0]
    k = A.shape[0]
    if k == 0:
        return np.linalg.solve(Sigma, -g), np.zeros(0)
    K = np.zeros((m + k, m + k))
    K[:m, :m] = Sigma
    K[:m, m:] = -A.T
    K[m:, :m] = A
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:m], sol[m:]


def solve_qp(Sigma, b, Q=None, tol=1e-10, max_iter=None, working_set=None):
    """Minimise ``0.5 v'Sv - b'v`` subject to ``Qv >= 0``.

    ``working_set`` optionally seeds the active set (all cone constraints are
    active at the start point ``v = 0``); the answer does not depend on it.
    """
    Sigma = _check_sigma(Sigma)
    b = np.asarray(b, dtype=float).ravel()
    m = b.size
    if Sigma.shape[0] != m:
        raise ValueError("Sigma and b dimensions differ")
    Q = np.zeros((0, m)) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.size == 0:
        Q = np.zeros((0, m))
    n = Q.shape[0]
    if max_iter is None:
        max_iter = 50 * (n + m) + 100

    v_free = np.linalg.solve(Sigma, b)
    if n == 0 or (working_set is None and np.all(Q @ v_free >= -tol)):
        x, W, lam_w, it = v_free, [], np.zeros(0), 0
    else:
        x = np.zeros(m)
        W = _independent_rows(Q, sorted(set(working_set or [])))
        for it in range(1, max_iter + 1):
            g = Sigma @ x - b
            p, lam_w = _eqp_step(Sigma, g, Q[W])
            if np.linalg.norm(p) <= 1e-13 * (1.0 + np.linalg.norm(x)):
                if not W or lam_w.min() >= -tol:
                    break
                # Most negative multiplier; ties go to the lowest row index.
                worst = lam_w.min()
                cands = [W[j] for j in range(len(W)) if lam_w[j] <= worst + 1e-15]
                W.remove(min(cands))
                continue
            Qp = Q @ p
            Qx = Q @ x
            alpha, blocking = 1.0, None
            for i in range(n):
                if i in W or Qp[i] >= -1e-15:
                    continue
                ratio = max(Qx[i], 0.0) / -Qp[i]
                if ratio < alpha:
                    alpha, blocking = ratio, i
            x = x + alpha * p
            if blocking is not None:
                W.append(blocking)
        else:
            raise MaxIterationsExceeded(f"active set did not settle in {max_iter} iterations")

    lam = np.zeros(n)
    if W:
        # Least-squares multipliers on the final working set.
        lam_w = np.linalg.lstsq(Q[W].T, Sigma @ x - b, rcond=None)[0]
        lam[W] = lam_w
    stat = float(np.linalg.norm(Sigma @ x - b - Q.T @ lam))
    comp = float(abs(lam @ (Q @ x))) if n else 0.0
    return QPSolution(
        v_star=x,
        active_set=tuple(sorted(W)),
        multipliers=lam,
        objective=float(0.5 * x @ Sigma @ x - b @ x),
        iterations=it,
        stationarity=stat,
        complementarity=comp,
    )


def growth_terms(Sigma, b, v):
    """``(b'v, v'Sv)``; equal for a Kelly solution."""
    return float(b @ v), float(v @ Sigma @ v)


@dataclass(eq=False)
class KellyCurve:
    """Kelly proportions along a time grid plus exact evaluation anywhere.

    Off the grid, ``v*(t)`` is re-solved at ``t``; on segments where ``b`` and
    ``sigma`` are constant the solution is cached per segment.
    """

    model: object
    grid: np.ndarray
    solutions: list
    tol: float = 1e-10
    _cache: dict = field(default_factory=dict, repr=False)

    def _solve_at(self, k, t):
        model = self.model
        const = model.segment_is_constant(k)
        if const and k in self._cache:
            return self._cache[k]
        bp = model.breakpoints
        lo, hi = bp[k], bp[k + 1]
        t_eval = min(max(t, lo), hi)
        mid = 0.5 * (lo + hi)
        b = model.b.on_segment(model.b.segment_index(mid), t_eval)
        sig = model.sigma.on_segment(model.sigma.segment_index(mid), t_eval)
        sol = solve_qp(sig @ sig.T, b, model.constraint.Q, tol=self.tol)
        if const:
            self._cache[k] = sol
        return sol

    def solution(self, t, side="right"):
        return self._solve_at(self.model.merged_segment(t, side), t)

    def v_star(self, t, side="right"):
        return self.solution(t, side).v_star

    def v_star_on_segment(self, k, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.array([self._solve_at(k, s).v_star for s in tau])

    def growth_on_segment(self, k, tau):
        """``|sigma(u)' v*(u)|^2`` on merged segment ``k``."""
        model = self.model
        mid = 0.5 * (model.breakpoints[k] + model.breakpoints[k + 1])
        j = model.sigma.segment_index(mid)
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.empty(tau.size)
        for i, s in enumerate(tau):
            sv = model.sigma.on_segment(j, s).T @ self._solve_at(k, s).v_star
            out[i] = sv @ sv
        return out

    def sigma_v(self, t, side="right"):
        _, sig = self.model.coefficients(t, side)
        return sig.T @ self.v_star(t, side)

    def variance(self, t, s=None):
        """``int_t^s |sigma'v*|^2``; ``s`` defaults to the horizon."""
        s = self.model.horizon if s is None else s
        return integrate_squared_kelly_vol(self.model, self, t, s)

    @property
    def horizon(self):
        return self.model.horizon

    @property
    def v_grid(self):
        return np.array([s.v_star for s in self.solutions])

    @property
    def min_v_norm(self):
        return float(np.min(np.linalg.norm(self.v_grid, axis=1)))

    @property
    def min_sigma_v_norm(self):
        return float(min(np.linalg.norm(self.sigma_v(t)) for t in self.grid))

    def rows(self):
        """Per grid point: t, v*, b'v*, |sigma'v*|^2, active set."""
        out = []
        for t, sol in zip(self.grid, self.solutions):
            b, sig = self.model.coefficients(t)
            bv, vsv = growth_terms(sig @ sig.T, b, sol.v_star)
            out.append((float(t), sol.v_star.copy(), bv, vsv, sol.active_set))
        return out


def default_grid(model, grid_step=1.0 / 252.0):
    T = model.horizon
    return np.unique(np.concatenate([np.arange(0.0, T, grid_step), model.breakpoints[:-1]]))


def kelly_curve(model, grid=None, grid_step=1.0 / 252.0, tol=1e-10):
    """Solve the Kelly QP on every grid point (breakpoints are always added)."""
    if grid is None:
        grid = default_grid(model, grid_step)
    grid = np.unique(np.concatenate([np.asarray(grid, dtype=float), model.breakpoints[:-1]]))
    grid = grid[(grid >= 0) & (grid < model.horizon)]
    curve = KellyCurve(model=model, grid=grid, solutions=[], tol=tol)
    curve.solutions = [curve.solution(float(t)) for t in grid]
    if not curve.min_v_norm > 0 or not curve.min_sigma_v_norm > 0:
        raise IdentityViolation(float(grid[0]), 0.0)
    return curve


@dataclass
class IdentityReport:
    worst_residual: float
    worst_t: float
    min_growth: float


def fitness_identity_check(curve, rtol=1e-9):
    """Check ``b'v* = |sigma'v*|^2 > 0`` at every grid point."""
    worst, worst_t, min_growth = 0.0, float(curve.grid[0]), np.inf
    for t, sol in zip(curve.grid, curve.solutions):
        b, sig = curve.model.coefficients(t)
        v = sol.v_star
        bv, vsv = growth_terms(sig @ sig.T, b, v)
        resid = abs(bv - vsv)
        scale = max(1.0, np.linalg.norm(b) * np.linalg.norm(v))
        if resid > rtol * scale or not (bv > 0 and vsv > 0):
            raise IdentityViolation(float(t), resid)
        if resid / scale >= worst:
            worst, worst_t = resid / scale, float(t)
        min_growth = min(min_growth, vsv)
    return IdentityReport(worst_residual=worst, worst_t=worst_t, min_growth=float(min_growth))
