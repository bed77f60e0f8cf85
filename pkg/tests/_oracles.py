"""Independent reference computations shared by several test modules."""

import itertools

import numpy as np


def kkt_enumeration(Sigma, b, Q, tol=1e-9):
    """Cone-constrained Kelly portfolio by trying every active set.

    Slow (2^n linear solves) but independent of the active-set solver.
    """
    m = b.size
    n = Q.shape[0]
    best = None
    for k in range(n + 1):
        for S in itertools.combinations(range(n), k):
            QS = Q[list(S)]
            K = np.block([[Sigma, -QS.T], [QS, np.zeros((k, k))]])
            rhs = np.concatenate([b, np.zeros(k)])
            try:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            v, lam = sol[:m], sol[m:]
            if not np.allclose(K @ sol, rhs, atol=1e-10):
                continue
            if np.all(Q @ v >= -tol) and np.all(lam >= -tol):
                obj = 0.5 * v @ Sigma @ v - b @ v
                if best is None or obj < best[1] - 1e-14:
                    best = (v, obj)
    return best[0]


def random_kelly_instance(rng, max_assets=10, max_rows=6):
    """SPD covariance, cone rows and drift with a feasible profitable direction."""
    m = int(rng.integers(1, max_assets + 1))
    k = m + int(rng.integers(0, 3))
    sig = rng.normal(scale=0.2, size=(m, k))
    Sigma = sig @ sig.T + 1e-3 * np.eye(m)
    kind = rng.integers(0, 3)
    v0 = np.abs(rng.normal(size=m)) + 0.1
    if kind == 0:
        Q = np.zeros((0, m))
    elif kind == 1:
        Q = np.eye(m)
    else:
        n = int(rng.integers(1, max_rows + 1))
        Q = rng.normal(size=(n, m))
        Q *= np.sign(Q @ v0)[:, None]
    while True:
        b = Sigma @ v0 + rng.normal(scale=0.1, size=m)
        if b @ v0 > 0:
            return sig, Sigma, b, Q


def spliced_equilibrium_median(xi, x, pi, eps, b, sigma, v_star, horizon=1.0, alpha=0.5):
    """Exact alpha-quantile when ``pi`` dollars are held on ``[0, eps)`` and the
    equilibrium with floor ``xi`` is followed afterwards, one asset, constant
    coefficients. Integrates the equilibrium law over the Gaussian wealth at eps.
    """
    import math

    from scipy import integrate, optimize, stats

    mu = x + pi * b * eps
    sd = abs(pi) * sigma * math.sqrt(eps)
    V = (sigma * v_star) ** 2 * (horizon - eps)

    def F(y):
        def f(z):
            w = mu + sd * z
            if w <= xi:
                return stats.norm.pdf(z)
            return stats.norm.pdf(z) * stats.norm.cdf((math.log((y - xi) / (w - xi)) - V / 2) / math.sqrt(V))

        return integrate.quad(f, -12, 12, limit=400, epsabs=1e-13)[0]

    return optimize.brentq(lambda y: F(y) - alpha, xi + 1e-9, xi + 10 * (x - xi), xtol=1e-12)
