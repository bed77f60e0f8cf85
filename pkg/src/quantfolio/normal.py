"""Standard normal pdf, cdf, inverse cdf and Mills-type ratios.

Every closed form in the library runs through these four functions, so the
cdf is evaluated with ``erfc`` on the far side of zero (no cancellation in
either tail) and the ratios ``pdf/cdf`` use the scaled ``erfcx`` to stay
finite for arguments where both numerator and denominator underflow.
"""

import math

import numpy as np
from scipy.special import erfc, erfcx

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return out[()] if out.ndim == 0 else out


def norm_cdf(x):
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / SQRT2)
    return out[()] if out.ndim == 0 else out


def pdf_over_cdf(d):
    """phi(d) / Phi(d), accurate for all real d (including d -> -inf)."""
    d = np.asarray(d, dtype=float)
    out = SQRT_2_OVER_PI / erfcx(-d / SQRT2)
    return out[()] if out.ndim == 0 else out


# Acklam's rational approximation, |rel err| < 1.2e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p):
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den

    for mask, sign, tail in ((lo, 1.0, p[lo]), (hi, -1.0, 1.0 - p[hi])):
        q = np.sqrt(-2.0 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[mask] = sign * num / den
    return x


def norm_ppf(p):
    """Inverse standard normal cdf on (0, 1); returns -inf/inf at 0/1.

    The rational approximation is polished by one Newton step on the side of
    zero where the cdf is computed without cancellation.
    """
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    if np.any((p < 0.0) | (p > 1.0) | np.isnan(p)):
        raise ValueError("probability outside [0, 1]")
    x = np.full_like(p, np.nan)
    inner = (p > 0.0) & (p < 1.0)
    x[p == 0.0] = -np.inf
    x[p == 1.0] = np.inf

    pi = p[inner]
    xi = _acklam(pi)
    # Newton on the lower tail form: for x > 0 use 1 - p to avoid cancellation.
    upper = xi > 0
    err = np.where(upper, norm_cdf(-xi) - (1.0 - pi), pi - norm_cdf(xi))
    xi = xi + err / norm_pdf(xi)
    x[inner] = xi
    return x[0] if scalar else x
