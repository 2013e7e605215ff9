"""Independent oracles: Bessel zeros, slope fits, finite differences."""

import numpy as np
import pytest

from stokes_shape_spectra import oracles as oc
from stokes_shape_spectra.errors import DegenerateData


def test_spherical_bessel_closed_forms():
    x = np.array([0.5, 1.7, 4.0])
    assert np.allclose(oc.spherical_bessel(0, x), np.sin(x) / x)
    assert np.allclose(oc.spherical_bessel(1, x),
                       np.sin(x) / x ** 2 - np.cos(x) / x)


def test_spherical_bessel_recurrence_consistency():
    x = np.array([2.0, 6.0, 11.0])
    j3 = oc.spherical_bessel(3, x)
    j4 = oc.spherical_bessel(4, x)
    j5 = oc.spherical_bessel(5, x)
    assert np.allclose(j3 + j5, (2 * 4 + 1) / x * j4, rtol=1e-10)


def test_downward_recurrence_high_order():
    # cross-check the Miller path against the upward path at a safe x
    x = np.array([30.0])
    up = oc.spherical_bessel(8, x)
    down = oc.spherical_bessel(9, x)
    j10 = oc.spherical_bessel(10, x)
    assert np.allclose(up, (2 * 9 + 1) / x * down - j10, rtol=1e-8)


def test_bessel_zero_values():
    assert abs(oc.bessel_zero(1, 1) - 4.493409457909064) < 1e-9
    assert abs(oc.bessel_zero(2, 1) - 5.763459196894550) < 1e-6
    assert abs(oc.bessel_zero(0, 1) - np.pi) < 1e-10


def test_toroidal_spectrum_and_interlacing():
    spec = oc.bessel_toroidal_spectrum(3, 2)
    assert len(spec) == 6
    lam11 = [lam for n, s, lam in spec if (n, s) == (1, 1)][0]
    assert abs(lam11 - 20.190728556426629) < 1e-7
    firsts = [np.sqrt(lam) for n, s, lam in spec if s == 1]
    assert all(a < b for a, b in zip(firsts, firsts[1:]))


def test_fit_order_exact_powers():
    d = np.array([1e-1, 1e-2, 1e-3])
    fit = oc.fit_order(d, d ** 2)
    assert abs(fit.slope - 2.0) < 1e-12
    fit3 = oc.fit_order(d, 3.0 * d ** 3)
    assert abs(fit3.slope - 3.0) < 1e-12
    assert abs(np.exp(fit3.intercept) - 3.0) < 1e-10
    assert fit3.passes(2.9)


def test_fit_order_zero_residual_degenerate():
    with pytest.raises(DegenerateData):
        oc.fit_order([1e-1, 1e-2, 1e-3], [1e-2, 0.0, 1e-6])


def test_richardson_derivatives():
    f = lambda x: 2.0 + 3.0 * x - 5.0 * x ** 2 + 0.5 * x ** 3
    assert abs(oc.richardson_d1(f, 1e-2) - 3.0) < 1e-10
    assert abs(oc.richardson_d2(f, 1e-2) + 10.0) < 1e-8


def test_fd_eigen_slope_polynomial():
    lam0 = 20.0
    solve = lambda d: lam0 * (1.0 - 2.0 * d + 3.0 * d ** 2)
    lam1, lam2 = oc.fd_eigen_slope(solve, d=1e-3)
    assert abs(lam1 + 2.0 * lam0) < 1e-6
    assert abs(lam2 - 3.0 * lam0) < 1e-4


def test_mesh_extrapolate_exact_model():
    h = np.array([0.2, 0.1, 0.05])
    lam_star, p_true = 20.19, 2.0
    lam = lam_star + 0.8 * h ** p_true
    out, p = oc.mesh_extrapolate(h, lam)
    assert abs(out - lam_star) < 1e-10
    assert abs(p - p_true) < 1e-8
