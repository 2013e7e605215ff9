"""Oscillatory Stokeslet kernel, pressure companion, and the full
delta-expansion of the kernel along normally perturbed surfaces.

The velocity kernel implemented here is

    Gamma_ij(lam, x) = (1/4pi) [ delta_ij e^{ik|x|}/|x|
                                + (1/lam) d_i d_j ( (e^{ik|x|} - 1)/|x| ) ]

with k = sqrt(lam) on the branch Im k >= 0, together with the pressure
vector P_i(x) = x_i / (4pi |x|^3).  Each row of Gamma solves the
spectral Stokes system with pressure row P, which the test suite checks
by finite differences.  A config switch lets the series algebra run with
phase rate kappa = lam instead of sqrt(lam); the expansion machinery is
identical either way.

All delta-series are produced by the generic truncated-series engine in
``series``; hand closed forms for the low orders are kept only as test
vectors and closed-form diagnostics.
"""

import numpy as np

from . import series as ps
from .errors import CoincidentPoints, SingularPoint

FOUR_PI = 4.0 * np.pi


class SpectralParam:
    """Spectral parameter lam with wavenumber k (k^2 = lam, Im k >= 0)
    and the series phase rate kappa (k by default, lam in literal mode)."""

    def __init__(self, lam, phase_rate="sqrt"):
        self.lam = complex(lam)
        if phase_rate not in ("sqrt", "literal"):
            raise ValueError(f"unknown phase_rate {phase_rate!r}")
        self.phase_rate = phase_rate
        # principal square root: branch cut on the negative real axis, so
        # the operator family stays analytic across the positive reals
        # (contour integrals cross the axis); Im k >= 0 holds on and above
        # the real axis, where all spectral work happens.
        self.k = complex(np.sqrt(self.lam))

    @property
    def kappa(self):
        return self.k if self.phase_rate == "sqrt" else self.lam

    def __repr__(self):
        return f"SpectralParam(lam={self.lam}, phase_rate={self.phase_rate!r})"


def _norms(r_vec):
    return np.linalg.norm(np.asarray(r_vec, dtype=float), axis=-1)


def stokeslet(param, r_vec):
    """Gamma(lam, r_vec) and P(r_vec) at one or many separations.

    r_vec: (..., 3) real; returns (gamma (..., 3, 3) complex,
    pressure (..., 3) real).
    """
    r_vec = np.asarray(r_vec, dtype=float)
    r = _norms(r_vec)
    if np.any(r < 1e-14):
        raise SingularPoint("stokeslet evaluated at |x - y| < 1e-14")
    lam, k = param.lam, param.k
    rhat = r_vec / r[..., None]
    phase = np.exp(1j * k * r)
    # radial derivatives of g(r) = (e^{ikr} - 1)/r
    g1 = (1j * k * r * phase - phase + 1.0) / r ** 2
    g2 = (-k ** 2 * phase / r - 2j * k * phase / r ** 2
          + 2.0 * (phase - 1.0) / r ** 3)
    eye = np.eye(3)
    outer = rhat[..., :, None] * rhat[..., None, :]
    gamma = (eye * (phase / r)[..., None, None]
             + (g2[..., None, None] * outer
                + (g1 / r)[..., None, None] * (eye - outer)) / lam) / FOUR_PI
    pressure = r_vec / (FOUR_PI * r[..., None] ** 3)
    return gamma, pressure


def static_stokeslet(r_vec):
    """lam -> 0 limit (1/8pi)(delta_ij/r + r_i r_j / r^3)."""
    r_vec = np.asarray(r_vec, dtype=float)
    r = _norms(r_vec)
    if np.any(r < 1e-14):
        raise SingularPoint("stokeslet evaluated at |x - y| < 1e-14")
    rhat = r_vec / r[..., None]
    outer = rhat[..., :, None] * rhat[..., None, :]
    return (np.eye(3) + outer) / (8.0 * np.pi * r[..., None, None])


def pressure_vector(r_vec):
    r_vec = np.asarray(r_vec, dtype=float)
    r = _norms(r_vec)
    if np.any(r < 1e-14):
        raise SingularPoint("pressure kernel evaluated at |x - y| < 1e-14")
    return r_vec / (FOUR_PI * r[..., None] ** 3)


# ---------------------------------------------------------------------------
# delta-series building blocks.  Everything is a function of the pair
# data (diff = x - y, theta = rho(x)nu(x) - rho(y)nu(y)) and is computed
# for whole batches at once; the leading axis of every return value
# indexes the power of delta.


def separation_squared_series(diff, theta, order=ps.DEFAULT_ORDER):
    """|x - y + delta Theta|^2 as an exact quadratic in delta."""
    diff = np.asarray(diff, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r2 = np.einsum("...i,...i->...", diff, diff)
    if np.any(r2 < 1e-28):
        raise CoincidentPoints("series coefficients requested at x == y")
    s2 = np.zeros((order + 1,) + r2.shape, dtype=complex)
    s2[0] = r2
    if order >= 1:
        s2[1] = 2.0 * np.einsum("...i,...i->...", diff, theta)
    if order >= 2:
        s2[2] = np.einsum("...i,...i->...", theta, theta)
    return s2


def distance_power_series(diff, theta, m, order=ps.DEFAULT_ORDER):
    """Coefficients c_n^(m) of |x - y + delta Theta|^m."""
    return ps.power(separation_squared_series(diff, theta, order), m / 2.0)


def exp_series(param, diff, theta, order=ps.DEFAULT_ORDER):
    """Coefficients K_n of e^{i kappa |x - y + delta Theta|}."""
    c1 = distance_power_series(diff, theta, 1, order)
    return ps.exp(1j * param.kappa * c1)


def t_series(param, diff, theta, m, order=ps.DEFAULT_ORDER):
    """Normalized coefficients T_n^(m) with T_0 = 1 of
    e^{i kappa rt}/rt^m = (e^{i kappa r}/r^m)(1 + sum delta^n T_n)."""
    s2 = separation_squared_series(diff, theta, order)
    full = ps.mul(ps.exp(1j * param.kappa * ps.power(s2, 0.5)),
                  ps.power(s2, -m / 2.0))
    r = np.sqrt(s2[0].real)
    return full * (r ** m * np.exp(-1j * param.kappa * r))


def _dd_series(param, diff, theta, p, order=ps.DEFAULT_ORDER):
    """Series of d_i d_j (e^{i kappa rt} - 1)/rt^p at rt = |x-y+delta Theta|.

    With h(r) = (E - 1) r^{-p}:
        h'  = i kappa E r^{-p} - p (E - 1) r^{-p-1}
        h'' = -kappa^2 E r^{-p} - 2 p i kappa E r^{-p-1}
              + p (p+1) (E - 1) r^{-p-2}
    and d_i d_j h = h'' u_i u_j + (h'/r)(delta_ij - u_i u_j) with u the
    unit separation, all promoted to delta-series.
    """
    kap = param.kappa
    s2 = separation_squared_series(diff, theta, order)
    kk = ps.exp(1j * kap * ps.power(s2, 0.5))
    km1 = kk.copy()
    km1[0] = km1[0] - 1.0

    def inv_r(q):
        return ps.power(s2, -q / 2.0)

    h1 = 1j * kap * ps.mul(kk, inv_r(p)) - p * ps.mul(km1, inv_r(p + 1))
    h2 = (-kap ** 2 * ps.mul(kk, inv_r(p))
          - 2j * p * kap * ps.mul(kk, inv_r(p + 1))
          + p * (p + 1) * ps.mul(km1, inv_r(p + 2)))

    # u_i u_j / rt^2 as a series: (d_i + delta th_i)(d_j + delta th_j) / rt^2
    diff = np.asarray(diff, dtype=float)
    theta = np.asarray(theta, dtype=float)
    uij = np.zeros((order + 1,) + diff.shape[:-1] + (3, 3), dtype=complex)
    uij[0] = diff[..., :, None] * diff[..., None, :]
    if order >= 1:
        uij[1] = (diff[..., :, None] * theta[..., None, :]
                  + theta[..., :, None] * diff[..., None, :])
    if order >= 2:
        uij[2] = theta[..., :, None] * theta[..., None, :]
    hat = ps.mul(uij, inv_r(2)[..., None, None])

    ident = np.zeros_like(hat)
    ident[0] = np.eye(3)
    return (ps.mul(h2[..., None, None], hat)
            + ps.mul(ps.mul(h1, inv_r(1))[..., None, None], ident - hat))


def r_series(param, diff, theta, order=ps.DEFAULT_ORDER):
    """Coefficients R_n^(ij) of d_i d_j (e^{i kappa rt} - 1)/rt for the
    implemented kernel normalization."""
    return _dd_series(param, diff, theta, 1, order)


def gamma_series(param, diff, theta, sigma, order=2):
    """Coefficients Gamma_ij^(n), n <= order, of
    Gamma(lam, |xt - yt|) dsigma_delta = (sum delta^n Gamma^(n)) dsigma.

    sigma is the delta-series of the surface-element ratio (leading axis
    = power of delta), broadcast against the pair batch.
    """
    ps.require_order(order)
    s2 = separation_squared_series(diff, theta, order)
    kk = ps.exp(1j * param.kappa * ps.power(s2, 0.5))
    iso = ps.mul(kk, ps.power(s2, -0.5))
    kernel = (np.eye(3) * iso[..., None, None]
              + _dd_series(param, diff, theta, 1, order) / param.lam) / FOUR_PI
    sigma = ps.truncate(np.asarray(sigma, dtype=complex), order)
    return ps.mul(kernel, sigma[..., None, None])


# ---------------------------------------------------------------------------
# Hand closed forms.  These never feed the operators; they are test
# vectors for the generic engine and hand-expanded low-order formulas
# kept for the diagnostic report.


def c1_closed(diff, theta, m):
    r = _norms(diff)
    dt = np.einsum("...i,...i->...", diff, theta)
    return m * dt * r ** (m - 2.0)


def k1_closed(param, diff, theta):
    r = _norms(diff)
    dt = np.einsum("...i,...i->...", diff, theta)
    return 1j * param.kappa * dt / r * np.exp(1j * param.kappa * r)


def t1_closed(param, diff, theta, m):
    r = _norms(diff)
    dt = np.einsum("...i,...i->...", diff, theta)
    return dt * (1j * param.kappa / r - m / r ** 2)


def r1_printed(param, diff, theta):
    """Hand-expanded first-order coefficient of
    d_i d_j (e^{i kappa rt} - 1)/rt^3.  Reported against the generic
    engine, never consumed."""
    lam = param.kappa
    diff = np.asarray(diff, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(_norms(diff))
    dt = np.asarray(np.einsum("...i,...i->...", diff, theta))
    eye = np.eye(3)
    dd = diff[..., :, None] * diff[..., None, :]
    sym = (diff[..., :, None] * theta[..., None, :]
           + theta[..., :, None] * diff[..., None, :])
    phase = np.asarray(np.exp(1j * lam * r), dtype=complex)

    def c0(m):
        return (r ** m)[..., None, None]

    def c1(m):
        return (m * dt * r ** (m - 2.0))[..., None, None]

    term_a = (1j * lam * dt / r)[..., None, None] * (
        1j * lam * eye / c0(4) - 3.0 * eye / c0(5) - lam ** 2 * dd / c0(5)
        - 7j * lam * dd / c0(6) + 15.0 * dd / c0(7)
    ) * phase[..., None, None]
    term_b = (
        1j * lam * eye * c1(4) / c0(4) ** 2
        - 3.0 * eye * c1(5) / c0(5) ** 2
        - lam ** 2 * (-dd * c1(5) / c0(5) ** 2 + sym / c0(5))
        - 7j * lam * (-dd * c1(6) / c0(6) ** 2 + sym / c0(6))
        + 15.0 * (-dd * c1(7) / c0(7) ** 2 + sym / c0(7))
    ) * phase[..., None, None]
    term_c = (3.0 * eye * c1(5) / c0(5) ** 2
              - 15.0 * (-dd * c1(7) / c0(7) ** 2 + sym / c0(7)))
    return term_a + term_b + term_c


def r1_printed_discrepancy(param, diff, theta, order=2):
    """Max relative difference between the hand-expanded first-order
    formula and the generic engine on the same /rt^3 kernel power."""
    engine = _dd_series(param, diff, theta, 3, order)[1]
    printed = r1_printed(param, diff, theta)
    denom = max(float(np.max(np.abs(engine))), 1e-300)
    return float(np.max(np.abs(engine - printed))) / denom


def gamma1_printed(param, diff, theta, sigma, order=2):
    """Hand-expanded first-order kernel coefficient (isotropic T-terms,
    g-hat products, E and T-hat terms).  Diagnostic only; the generic
    gamma_series is authoritative."""
    lam = param.lam
    diff = np.asarray(diff, dtype=float)
    theta = np.asarray(theta, dtype=float)
    sigma = ps.truncate(np.asarray(sigma, dtype=complex), order)
    s2 = separation_squared_series(diff, theta, order)
    kk = ps.exp(1j * param.kappa * ps.power(s2, 0.5))

    def full(m):
        # un-normalized coefficients of e^{i kappa rt}/rt^m
        return ps.mul(kk, ps.power(s2, -m / 2.0))

    ghat = np.zeros((order + 1,) + diff.shape[:-1] + (3, 3), dtype=complex)
    ghat[0] = diff[..., :, None] * diff[..., None, :]
    if order >= 1:
        ghat[1] = (diff[..., :, None] * theta[..., None, :]
                   + theta[..., :, None] * diff[..., None, :])
    if order >= 2:
        ghat[2] = theta[..., :, None] * theta[..., None, :]

    c5 = ps.power(s2, 2.5)
    e_ser = ps.mul(ps.mul(ps.mul(ghat, ps.power(s2, 0.5)[..., None, None]),
                          kk[..., None, None]),
                   sigma[..., None, None])
    that = ps.mul(ps.mul(ghat, ps.power(s2, -3.5)[..., None, None]),
                  sigma[..., None, None])

    t1_1, t1_4, t1_5 = full(1)[1], full(4)[1], full(5)[1]
    t0_3, t1_3, t0_4 = full(3)[0], full(3)[1], full(4)[0]
    eye = np.eye(3)
    iso = (t1_1 + 1j / lam * t1_4 - 3.0 * c5[1] / lam ** 2
           - 3.0 * t1_5 / lam ** 2)
    return (eye * iso[..., None, None]
            + (15.0 / lam ** 2 - 1.0) * (t0_3[..., None, None] * ghat[1]
                                         + t1_3[..., None, None] * ghat[0])
            - 4j / lam * (t0_4[..., None, None] * ghat[1]
                          + t1_4[..., None, None] * ghat[0])
            - 3j / lam * e_ser[1] + 15.0 / lam ** 2 * that[1]) / FOUR_PI


def gamma1_printed_discrepancy(param, diff, theta, sigma, order=2):
    engine = gamma_series(param, diff, theta, sigma, order)[1]
    printed = gamma1_printed(param, diff, theta, sigma, order)
    denom = max(float(np.max(np.abs(engine))), 1e-300)
    return float(np.max(np.abs(engine - printed))) / denom
