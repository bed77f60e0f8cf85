"""Synthetic household cohorts and the share-on-wealth regression.

Each household starts with wealth ``x0 = xbar0 exp(rho U)``, insures a fraction
``beta`` of it and invests the rest in a risky fund with gross return
``R = (1 + mu t) exp(-varpi^2 t / 2 + varpi sqrt(t) Z)``. The risky share after
``t`` years is ``(1 - beta) R / (beta + (1 - beta) R)``; regressing it on log
wealth across households gives the sensitivity reported per age group.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateRegressor
from .rng import block_normals

AGE_LABELS = {0: "26-35", 10: "36-45", 20: "46-55", 30: "56-65", 40: "66-75"}
DEFAULT_BETAS = (0.4, 0.5, 0.6)
DEFAULT_VARPIS = (0.0065, 0.0070, 0.0075)
HOUSEHOLD_STREAM = 0x484F5553


@dataclass(frozen=True)
class HouseholdConfig:
    num_households: int = 3000
    xbar0: float = 61811.8
    rho_disp: float = 0.0569
    beta: float = 0.4
    mu: float = 0.04
    varpi: float = 0.0065
    ages_t: tuple = (0, 10, 20, 30, 40)
    replications: int = 2000
    seed: int = 7
    # base of the logarithm used as regressor; 2 reproduces the published table
    log_base: float = 2.0

    def __post_init__(self):
        if self.num_households < 2 or self.replications < 1:
            raise ValueError("need at least two households and one replication")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        for name in ("xbar0", "rho_disp", "mu", "varpi", "log_base"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.log_base == 1.0:
            raise ValueError("log_base must differ from 1")
        if any(t < 0 for t in self.ages_t):
            raise ValueError("ages must be non-negative offsets")


@dataclass(frozen=True, eq=False)
class Cohort:
    x0: np.ndarray
    wealth: dict
    share: dict
    # exclusion filters for survey data; never triggered on synthetic draws
    excluded: int = 0


def _draws(config, replication_index):
    n = config.num_households
    U = block_normals(config.seed, replication_index, 0, 0, n, stream=HOUSEHOLD_STREAM)
    Z = block_normals(config.seed, replication_index, 0, 1, n, stream=HOUSEHOLD_STREAM)
    return U, Z


def _gross_return(config, t, Z):
    w = config.varpi
    return (1.0 + config.mu * t) * np.exp(-0.5 * w * w * t + w * math.sqrt(t) * Z)


def simulate_cohort(config, replication_index):
    """Wealth and risky share of every household at each age offset."""
    U, Z = _draws(config, replication_index)
    x0 = config.xbar0 * np.exp(config.rho_disp * U)
    b = config.beta
    wealth, share = {}, {}
    for t in config.ages_t:
        R = _gross_return(config, t, Z)
        denom = b + (1.0 - b) * R
        wealth[t] = x0 * denom
        share[t] = (1.0 - b) * R / denom
    excluded = int(np.sum(~(x0 > 0)))
    return Cohort(x0=x0, wealth=wealth, share=share, excluded=excluded)


def ols_slope(lnX, p):
    """OLS slope (with intercept) of ``p`` on ``lnX``, times 100."""
    lnX = np.asarray(lnX, dtype=float)
    p = np.asarray(p, dtype=float)
    if lnX.shape != p.shape or lnX.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    dx = lnX - lnX.mean()
    sxx = float(dx @ dx)
    if sxx <= 0.0:
        raise DegenerateRegressor("regressor is constant")
    if np.ptp(p) == 0.0:
        return 0.0
    return 100.0 * float(dx @ (p - p.mean())) / sxx


def _batched_slopes(x, y):
    """Row-wise OLS slopes times 100 for ``reps x n`` arrays."""
    dx = x - x.mean(axis=1, keepdims=True)
    dy = y - y.mean(axis=1, keepdims=True)
    sxx = np.einsum("ij,ij->i", dx, dx)
    sxy = np.einsum("ij,ij->i", dx, dy)
    flat = np.ptp(y, axis=1) == 0.0
    out = np.where(flat, 0.0, 100.0 * sxy / np.where(sxx > 0, sxx, 1.0))
    return np.where(sxx > 0, out, 0.0)


def replication_slopes(config):
    """``replications x len(ages_t)`` matrix of slopes for one (beta, varpi) cell."""
    reps = config.replications
    n = config.num_households
    U = np.empty((reps, n))
    Z = np.empty((reps, n))
    for r in range(reps):
        U[r], Z[r] = _draws(config, r)
    return _slopes_from_draws(config, U, Z)


def _slopes_from_draws(config, U, Z):
    b = config.beta
    log_x0 = math.log(config.xbar0) + config.rho_disp * U
    scale = 1.0 / math.log(config.log_base)
    out = np.empty((U.shape[0], len(config.ages_t)))
    for j, t in enumerate(config.ages_t):
        R = _gross_return(config, t, Z)
        denom = b + (1.0 - b) * R
        p = (1.0 - b) * R / denom
        out[:, j] = _batched_slopes((log_x0 + np.log(denom)) * scale, p)
    return out


@dataclass(frozen=True, eq=False)
class RegressionOutput:
    betas: tuple
    varpis: tuple
    ages_t: tuple
    mean: np.ndarray  # varpi x beta x age
    std: np.ndarray

    def cell(self, beta, varpi, t):
        i = self.varpis.index(varpi)
        j = self.betas.index(beta)
        k = self.ages_t.index(t)
        return float(self.mean[i, j, k]), float(self.std[i, j, k])

    def to_csv(self, path=None):
        """Rows varpi x beta, one column per age group, cells ``mean (std)``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["varpi", "beta"] + [AGE_LABELS.get(t, f"t={t}") for t in self.ages_t])
        for i, vp in enumerate(self.varpis):
            for j, be in enumerate(self.betas):
                cells = [f"{self.mean[i, j, k]:.2f} ({self.std[i, j, k]:.2f})" for k in range(len(self.ages_t))]
                w.writerow([f"{vp:.4f}", f"{be:.2f}"] + cells)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def replicate_table(base=None, betas=DEFAULT_BETAS, varpis=DEFAULT_VARPIS):
    """Mean and std (across replications) of the slope for every cell.

    The same household draws are reused for all cells, so differences between
    cells are not blurred by sampling noise.
    """
    base = base or HouseholdConfig()
    betas, varpis = tuple(betas), tuple(varpis)
    reps, n = base.replications, base.num_households
    U = np.empty((reps, n))
    Z = np.empty((reps, n))
    for r in range(reps):
        U[r], Z[r] = _draws(base, r)
    A = len(base.ages_t)
    mean = np.empty((len(varpis), len(betas), A))
    std = np.empty_like(mean)
    for i, vp in enumerate(varpis):
        for j, be in enumerate(betas):
            s = _slopes_from_draws(replace(base, beta=be, varpi=vp), U, Z)
            mean[i, j] = s.mean(axis=0)
            std[i, j] = s.std(axis=0, ddof=1) if reps > 1 else 0.0
    return RegressionOutput(betas=betas, varpis=varpis, ages_t=tuple(base.ages_t), mean=mean, std=std)
