"""Independent ground-truth generators and order-of-convergence fitting.

Nothing in this module touches kernel, operator, or solver code: the
ball spectrum comes from spherical Bessel zeros computed by bisection,
eigenvalue derivatives come from Richardson finite differences of an
injected solve callable, and truncation orders are certified by log-log
least squares.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure, DegenerateData


def spherical_bessel(n, x):
    """j_n(x) for scalar or array x > 0; closed forms for n <= 2,
    upward recurrence to n = 8, downward (Miller) recurrence above."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("spherical_bessel requires x > 0")
    j0 = np.sin(x) / x
    if n == 0:
        return j0
    j1 = np.sin(x) / x ** 2 - np.cos(x) / x
    if n == 1:
        return j1
    if n <= 8:
        jm, jc = j0, j1
        for m in range(1, n):
            jm, jc = jc, (2 * m + 1) / x * jc - jm
        return jc
    # downward recurrence from a start order well above n
    start = n + int(np.max(np.sqrt(40.0 * n))) + 20
    jp = np.zeros_like(x)
    jc = np.full_like(x, 1e-30)
    out = None
    for m in range(start, 0, -1):
        jm = (2 * m + 1) / x * jc - jp
        jp, jc = jc, jm
        if m - 1 == n:
            out = jc.copy()
    return out * (j0 / jc)


def bessel_zero(n, s, tol=1e-12):
    """s-th positive zero of j_n by sign-scan plus bisection."""
    lo, hi = 0.5, (s + n + 2) * np.pi
    xs = np.linspace(lo, hi, int(40 * (s + n + 2)))
    vals = spherical_bessel(n, xs)
    signs = np.sign(vals)
    idx = np.where(signs[:-1] * signs[1:] < 0)[0]
    if len(idx) < s:
        raise BracketFailure(f"found only {len(idx)} sign changes for j_{n}")
    a, b = xs[idx[s - 1]], xs[idx[s - 1] + 1]
    fa = spherical_bessel(n, np.array(a))
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = spherical_bessel(n, np.array(m))
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def bessel_toroidal_spectrum(n_max, zeros_per_n):
    """Toroidal ball eigenvalues: (n, s, lambda = j_{n,s}^2), each with
    multiplicity 2n + 1 (not repeated in the list)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    out = []
    for n in range(1, n_max + 1):
        for s in range(1, zeros_per_n + 1):
            z = bessel_zero(n, s)
            out.append((n, s, z * z))
    return out


# ---------------------------------------------------------------------------


@dataclass
class SlopeFit:
    """Log-log least-squares line through (delta, residual) pairs."""

    deltas: np.ndarray
    residuals: np.ndarray
    slope: float
    intercept: float
    correlation: float

    def passes(self, min_slope, min_corr=0.99):
        return self.slope >= min_slope and self.correlation >= min_corr


def fit_order(deltas, residuals):
    deltas = np.asarray(deltas, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if deltas.size < 3:
        raise ValueError("need at least 3 points for an order fit")
    if np.any(residuals <= 0.0):
        raise DegenerateData("zero residual: truncation is exact (order inf)")
    lx, ly = np.log(deltas), np.log(residuals)
    slope, intercept = np.polyfit(lx, ly, 1)
    corr = abs(np.corrcoef(lx, ly)[0, 1])
    return SlopeFit(deltas=deltas, residuals=residuals, slope=float(slope),
                    intercept=float(intercept), correlation=float(corr))


def richardson_d1(f, d):
    """Fourth-order first derivative of a callable at 0 with step d."""
    return (8.0 * (f(d) - f(-d)) - (f(2 * d) - f(-2 * d))) / (12.0 * d)


def richardson_d2(f, d):
    """Fourth-order second derivative of a callable at 0 with step d."""
    return (-(f(2 * d) + f(-2 * d)) + 16.0 * (f(d) + f(-d))
            - 30.0 * f(0.0)) / (12.0 * d ** 2)


def fd_eigen_slope(solve_fn, d=1e-3):
    """(lambda_1, lambda_2) from Richardson finite differences of the
    cluster-mean eigenvalue callable solve_fn(delta)."""
    cache = {}

    def f(x):
        if x not in cache:
            cache[x] = float(solve_fn(x))
        return cache[x]

    lam1 = richardson_d1(f, d)
    lam2 = 0.5 * richardson_d2(f, d)
    return lam1, lam2


def mesh_extrapolate(h_values, lam_values):
    """Fit lambda(h) = lambda* + C h^p through three mesh levels; returns
    (lambda*, p).  Falls back to p = 2 Richardson if the order equation
    has no bracketed root."""
    h = np.asarray(h_values, dtype=float)
    lam = np.asarray(lam_values, dtype=float)
    if h.size != 3:
        raise ValueError("mesh_extrapolate expects exactly 3 levels")
    order = np.argsort(h)[::-1]          # coarsest first
    h, lam = h[order], lam[order]
    d1, d2 = lam[0] - lam[1], lam[1] - lam[2]
    if d2 == 0.0 or d1 * d2 <= 0.0:
        p = 2.0
    else:
        target = d1 / d2

        def g(p):
            return ((h[0] ** p - h[1] ** p) / (h[1] ** p - h[2] ** p)
                    - target)

        from scipy.optimize import brentq
        try:
            p = brentq(g, 0.2, 12.0)
        except ValueError:
            p = 2.0
    denom = h[1] ** p - h[2] ** p
    c = d2 / denom if denom else 0.0
    lam_star = lam[2] - c * h[2] ** p
    return float(lam_star), float(p)
