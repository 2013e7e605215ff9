"""Surfaces, perturbation fields, and geometric delta-expansions."""

import numpy as np
import pytest

from stokes_shape_spectra import geometry as ge
from stokes_shape_spectra import series as ps
from stokes_shape_spectra.errors import DeltaOutOfRange


def sample_frame(surface, n=7, seed=3):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.3, np.pi - 0.3, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return surface.frame(theta, phi)


def test_frame_orthogonality_and_outward_normal():
    for surface in (ge.Sphere(), ge.Ellipsoid(1.0, 0.8, 1.3),
                    ge.BumpySphere(0.08)):
        fr = sample_frame(surface)
        dot1 = np.einsum("...i,...i->...", fr.normal, fr.t1)
        dot2 = np.einsum("...i,...i->...", fr.normal, fr.t2)
        assert np.abs(dot1).max() < 1e-12 * np.linalg.norm(fr.t1, axis=-1).max()
        assert np.abs(dot2).max() < 1e-12 * np.linalg.norm(fr.t2, axis=-1).max()
        outward = np.einsum("...i,...i->...", fr.normal, fr.x)
        assert np.all(outward > 0)


def test_sphere_frame_exact():
    fr = ge.Sphere().frame(np.array([0.7]), np.array([1.1]))
    assert np.allclose(np.linalg.norm(fr.x, axis=-1), 1.0)
    assert np.allclose(fr.normal, fr.x)
    assert np.allclose(fr.jac, np.sin(0.7))


def test_contains_star_shaped():
    surf = ge.Ellipsoid(1.0, 0.8, 1.3)
    pts = np.array([[0.0, 0.0, 0.0], [0.9, 0.0, 0.0], [1.1, 0.0, 0.0],
                    [0.0, 0.0, 1.25], [0.0, 0.85, 0.0]])
    inside = surf.contains(pts)
    assert inside.tolist() == [True, True, False, True, False]
    # margin shrinks the inside region
    assert not surf.contains(np.array([[0.95, 0.0, 0.0]]), margin=0.1)[0]


def test_jacobian_det_paper_matches_det():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 3, 3))
    for d in (0.01, 0.2, 0.7):
        direct = np.linalg.det(np.eye(3) + d * m)
        assert np.abs(ge.jacobian_det_paper(m, d) - direct).max() < 1e-12


def test_surface_element_series_identity():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((3, 3))
    sig = ge.surface_element_series(m)
    d = 0.37
    val = sum(s * d ** n for n, s in enumerate(sig))
    assert abs(val - np.linalg.det(np.eye(3) + d * m)) < 1e-12


def test_sphere_unit_rho_sigma_1331_and_identity_matrix():
    surf = ge.Sphere()
    field = ge.PerturbationField(surf, ge.ConstantRho(1.0))
    fr = sample_frame(surf)
    m = field.matrix(fr)
    assert np.abs(m - np.eye(3)).max() < 1e-9
    sig = ge.surface_element_series(m)
    assert np.allclose(sig[1], 3.0, atol=1e-8)
    assert np.allclose(sig[2], 3.0, atol=1e-7)
    assert np.allclose(sig[3], 1.0, atol=1e-7)


def test_exact_element_sphere_dilation():
    """For rho == 1 on the sphere the deformed element is exactly
    (1+delta)^2: series (1, 2, 1, 0, 0)."""
    surf = ge.Sphere()
    field = ge.PerturbationField(surf, ge.ConstantRho(1.0))
    fr = sample_frame(surf)
    m = field.matrix(fr)
    ser = ge.surface_element_exact_series(fr, m)
    ref = np.array([1.0, 2.0, 1.0, 0.0, 0.0])
    for n in range(5):
        assert np.abs(ser[n] - ref[n]).max() < 1e-7


def test_exact_element_series_matches_direct_evaluation():
    surf = ge.BumpySphere(0.1)
    field = ge.PerturbationField(surf, ge.X3SquaredRho(1.0))
    fr = sample_frame(surf)
    m = field.matrix(fr)
    ser = ge.surface_element_exact_series(fr, m)
    deltas = np.array([0.1, 0.03, 0.01])
    errs = [np.abs(ps.evaluate(ser, d)
                   - ge.surface_element_exact(fr, m, d)).max()
            for d in deltas]
    # order-4 truncation of the sqrt leaves an O(delta^5) remainder
    slopes = np.diff(np.log(errs)) / np.diff(np.log(deltas))
    assert np.all(slopes > 4.5)


def test_exact_vs_paper_element_first_order_difference_reported():
    """The trace-polynomial element and the exact area ratio generally
    differ already at first order (the polynomial sees the full ambient
    trace, the area ratio only the tangential part); this difference is
    a reported property of the two conventions."""
    surf = ge.Sphere()
    field = ge.PerturbationField(surf, ge.X3SquaredRho(1.0))
    fr = sample_frame(surf)
    m = field.matrix(fr)
    exact1 = ge.surface_element_exact_series(fr, m)[1].real
    paper1 = ge.surface_element_paper_series(m)[1].real
    diff = np.abs(exact1 - paper1).max()
    assert np.isfinite(diff)


def test_normal_series_first_order_tangential_and_accurate():
    surf = ge.Sphere()
    field = ge.PerturbationField(surf, ge.X3SquaredRho(0.8))
    fr = sample_frame(surf)
    m = field.matrix(fr)
    nu0, nu1 = ge.normal_series(fr, m)
    assert np.abs(np.einsum("...i,...i->...", nu0, nu1)).max() < 1e-10
    errs = []
    deltas = [1e-1, 3e-2, 1e-2]
    deformed = [ge.DeformedSurface(surf, field, d).deformed_normal(fr, m)
                for d in deltas]
    for d, nud in zip(deltas, deformed):
        errs.append(np.abs(nud - nu0 - d * nu1).max())
    slopes = np.diff(np.log(errs)) / np.diff(np.log(deltas))
    assert np.all(slopes > 1.9)


def test_delta_budget_and_check():
    surf = ge.Sphere()
    field = ge.PerturbationField(surf, ge.ConstantRho(1.0))
    fr = sample_frame(surf)
    ds = ge.DeformedSurface(surf, field, 5.0)
    with pytest.raises(DeltaOutOfRange):
        ds.check_delta(fr)
    ok = ge.DeformedSurface(surf, field, 0.1)
    ok.check_delta(fr)
    assert 0.0 < ds.delta0(fr) < 1.0


def test_rho_catalog_gradients_match_fd():
    rng = np.random.default_rng(5)
    x = rng.uniform(-0.8, 0.8, (6, 3)) + np.array([0.0, 0.0, 1.0])
    h = 1e-6
    for cls in (ge.X3Rho, ge.X3SquaredRho,
                lambda amplitude: ge.TrigBumpRho(0.8, 0.4, 0.6, amplitude)):
        rho = cls(amplitude=1.3)
        g = rho.grad(x)
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = h
            fd = (rho.value(x + e) - rho.value(x - e)) / (2.0 * h)
            assert np.abs(g[..., ax] - fd).max() < 1e-6


def test_shape_operator_norm_sphere():
    surf = ge.Sphere()
    fr = sample_frame(surf)
    assert abs(ge.shape_operator_norm(surf, fr) - 1.0) < 1e-8
