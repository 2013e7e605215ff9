"""Contour calculus for eigenvalue clusters under normal perturbations.

The workhorse oracle is the pure dilation of the unit sphere (rho == 1):
the deformed nodes are an exact rescaling of the unperturbed ones, so the
discrete family satisfies A_delta(lambda) = (1+delta) A_0((1+delta)^2
lambda) identically and every expansion coefficient has a closed form:
lambda(delta) = lambda0 (1+delta)^-2, hence lambda1 = -2 lambda0 and
lambda2 = +3 lambda0, at any mesh size.
"""

import numpy as np
import pytest

from stokes_shape_spectra.errors import ContourThroughEigenvalue
from stokes_shape_spectra.geometry import (ConstantRho, PerturbationField,
                                           Sphere)
from stokes_shape_spectra.operators import NystromAssembler
from stokes_shape_spectra import perturbation as pb
from stokes_shape_spectra import solver as sv
from stokes_shape_spectra.quadrature import SurfaceGrid


@pytest.fixture(scope="module")
def asm():
    grid = SurfaceGrid(Sphere(), 8)
    return NystromAssembler(grid, PerturbationField(Sphere(), ConstantRho(1.0)))


@pytest.fixture(scope="module")
def eig(asm):
    return sv.find_eigen(asm, (19.0, 22.0), contour_points=16)


@pytest.fixture(scope="module")
def contour(eig):
    # radius 1.0 keeps the cluster well inside even after it moves by
    # ~0.4 at delta = 0.01 (dilation shifts the mean by -2 lambda0 delta)
    return pb.Contour(center=eig.lambda_star, radius=1.0, n_points=16)


def test_contour_points_on_circle():
    c = pb.Contour(center=10.0, radius=0.7, n_points=16)
    pts = c.points
    assert pts.shape == (16,)
    assert np.allclose(np.abs(pts - 10.0), 0.7)
    # midpoint rule: no point on the positive real axis through the center
    assert np.abs(pts.imag).min() > 1e-12


def test_default_contour_radius_cap():
    assert pb.default_contour(20.0, gap=0.8).radius == pytest.approx(0.4)
    assert pb.default_contour(500.0, gap=100.0).radius == pytest.approx(2.0)


def test_winding_multiplicity(asm, eig, contour):
    def afun(z):
        return asm.assemble(pb.SpectralParam(z), 0.0).matrix

    assert pb.winding_multiplicity(afun, contour) == eig.multiplicity == 3


def test_contour_validate_rejects_grazing_circle(asm, eig):
    # synthetic family: scalar zero planted exactly on one contour point
    c = pb.Contour(center=10.0, radius=0.5, n_points=8)
    z0 = c.points[3] + 1e-8  # nearly on the circle, not exactly singular
    nu = np.array([0.0, 1.0], dtype=complex)

    def grazing(z):
        return np.diag([z - z0, 5.0]).astype(complex)

    with pytest.raises(ContourThroughEigenvalue):
        c.validate(grazing, nu)

    # a well-separated operator family passes and returns the minima
    def afun(z):
        return asm.assemble(pb.SpectralParam(z), 0.0).matrix

    mins = pb.Contour(center=eig.lambda_star, radius=0.5,
                      n_points=8).validate(afun, sv.normal_density(asm.grid))
    assert mins.shape == (8,) and np.all(mins > 0.0)


@pytest.mark.slow
def test_contour_shift_zero_delta(asm, eig, contour):
    shift, m = pb.contour_shift(asm, contour, 0.0)
    assert m == 3
    assert abs(shift) / m < 5e-3 * contour.radius


@pytest.mark.slow
def test_contour_shift_matches_dilation(asm, eig, contour):
    d = 0.01
    shift0, m = pb.contour_shift(asm, contour, 0.0)
    cluster_sum = m * contour.center + shift0.real
    shift, m2 = pb.contour_shift(asm, contour, d)
    assert m2 == m
    expect = cluster_sum * ((1.0 + d) ** -2 - 1.0)
    assert abs(shift.real - expect) < 5e-6 * abs(expect)


@pytest.mark.slow
def test_lambda_series_dilation_ratios(asm, eig, contour):
    ser = pb.lambda_series(asm, eig, contour)
    assert ser.multiplicity == 3
    assert abs(ser.lambda1 / ser.lambda0 + 2.0) < 1e-8
    assert abs(ser.lambda2 / ser.lambda0 - 3.0) < 1e-6
    # the discrete zeros sit O(mesh error) off the real axis, so the
    # imaginary part is small relative to lambda1 but not at rounding level
    assert abs(ser.meta["lambda1_imag"]) < 1e-3 * abs(ser.lambda1)
    d = 0.02
    assert ser.evaluate(d) == pytest.approx(
        ser.lambda0 + ser.lambda1 * d + ser.lambda2 * d * d)


@pytest.mark.slow
def test_lambda_series_radius_stability(asm, eig, contour):
    ser_a = pb.lambda_series(asm, eig, contour)
    wider = pb.Contour(center=contour.center, radius=1.2 * contour.radius,
                       n_points=contour.n_points)
    ser_b = pb.lambda_series(asm, eig, wider)
    assert abs(ser_a.lambda1 - ser_b.lambda1) < 1e-6 * abs(ser_a.lambda1)
    assert abs(ser_a.lambda2 - ser_b.lambda2) < 1e-5 * abs(ser_a.lambda2)


@pytest.mark.slow
def test_zero_amplitude_gives_zero_shift(eig, contour):
    grid = SurfaceGrid(Sphere(), 8)
    asm0 = NystromAssembler(grid, PerturbationField(Sphere(),
                                                    ConstantRho(0.0)))
    ser = pb.lambda_series(asm0, eig, contour)
    assert abs(ser.lambda1) < 1e-10 * ser.lambda0
    assert abs(ser.lambda2) < 1e-10 * ser.lambda0


@pytest.mark.slow
def test_reference_form_agreement(asm, eig, contour):
    ser = pb.lambda_series(asm, eig, contour)
    ref = pb.lambda_series_reference_forms(asm, eig, contour, n_points=12)
    # the by-parts (consistent) variant must reproduce the primary values
    assert abs(ref["consistent"]["lambda1"] - ser.lambda1) < \
        1e-4 * abs(ser.lambda1)
    assert abs(ref["consistent"]["lambda2"] - ser.lambda2) < \
        1e-3 * abs(ser.lambda2)
    # the literal printed variant is a diagnostic only: finite, reported
    assert np.isfinite(ref["three_term"]["lambda1"])
    assert np.isfinite(ref["three_term"]["lambda2"])


@pytest.mark.slow
def test_eigenfunction_correction_dilation(asm, eig):
    contour = pb.Contour(center=eig.lambda_star, radius=0.5, n_points=8)
    probes = np.array([[0.12, 0.05, -0.1], [-0.08, 0.15, 0.1],
                       [0.0, -0.1, 0.2]])
    v0, v1, p0, p1 = pb.eigenfunction_correction(asm, eig, probes,
                                                 contour=contour)
    assert v0.shape == probes.shape and v1.shape == probes.shape
    assert abs(p0[0]) < 1e-14 and abs(p1[0]) < 1e-12
    assert np.all(np.isfinite(v1)) and np.all(np.isfinite(p1))
    # first-order prediction beats the zeroth-order one at small delta
    d = 5e-3
    lam_d, v_d, p_d, resid, _ = pb._aligned_family(
        asm, eig, contour, probes, d, "sqrt", "exact", v_ref=v0)
    assert resid < 0.05
    err0 = np.linalg.norm(v_d - v0)
    err1 = np.linalg.norm(v_d - v0 - d * v1)
    assert err1 < 0.2 * err0
