"""Asymptotic expansion of eigenvalues, eigenfunctions, and pressures
under small normal perturbations of the boundary.

The eigenvalue coefficients come from contour integrals of the
log-determinant of the operator family: with A_delta = A0 + delta A1 +
delta^2 A2 + O(delta^3) and a circle enclosing exactly one eigenvalue
cluster of multiplicity m,

    sum_i lambda_i(delta) = const - (1/2 pi i) oint log det A_delta dλ,

so differentiating under the integral at delta = 0 gives the cluster
mean shifts

    lambda_1 = -(1/2 pi i m) oint tr[A0^{-1} A1] dλ,
    lambda_2 = -(1/2 pi i m) oint tr[A0^{-1} A2
                                     - (A0^{-1} A1)^2 / 2] dλ.

No lambda-derivative of the operator is needed in this form.  The
winding number (multiplicity) and finite-delta cluster means use the
moment integrals in :mod:`.solver`.

Eigenfunction and pressure corrections are finite differences in delta
of a gauge-aligned eigen family: at each delta the null cluster basis is
combined by least squares to best match the unperturbed field at probe
points, which removes the arbitrary rotation inside a multiplet.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import lu_factor, lu_solve, lstsq

from .errors import (ContourThroughEigenvalue, FactorizationFailure,
                     GaugeAlignmentFailure, PathLeavesDomain)
from .kernels import SpectralParam
from .oracles import richardson_d1
from .solver import (contour_moments, deflated_sigma_min, normal_density,
                     round_winding, smallest_singulars)
from . import operators as op_mod


@dataclass
class Contour:
    """Circle in the spectral plane around one eigenvalue cluster."""

    center: float
    radius: float
    n_points: int = 32

    @property
    def points(self):
        ang = 2.0 * np.pi * (np.arange(self.n_points) + 0.5) / self.n_points
        return self.center + self.radius * np.exp(1j * ang)

    def validate(self, assemble_fn, nu_hat, clearance=0.02):
        """Raise ContourThroughEigenvalue if the operator nearly loses
        invertibility on the circle.  The threshold is relative: any
        point whose deflated sigma_min falls below `clearance` times the
        contour median is treated as grazing an eigenvalue."""
        mins = np.array([deflated_sigma_min(assemble_fn(z), nu_hat)[0]
                         for z in self.points])
        floor = clearance * float(np.median(mins))
        if np.any(mins < floor):
            bad = self.points[np.argmin(mins)]
            raise ContourThroughEigenvalue(
                f"operator nearly singular at contour point {bad:.6g} "
                f"(sigma_min {mins.min():.3g}, median {np.median(mins):.3g})")
        return mins


def default_contour(lambda0, gap=None, n_points=32):
    """Contour of radius half the gap to the nearest other eigenvalue,
    capped at 2.0 (gap=None uses the cap)."""
    radius = 2.0 if gap is None else min(0.5 * abs(gap), 2.0)
    return Contour(center=float(lambda0), radius=radius, n_points=n_points)


def winding_multiplicity(assemble_fn, contour):
    """Number of operator zeros enclosed (integer winding of the
    log-determinant)."""
    a = contour_moments(assemble_fn, contour.center, contour.radius,
                        n_points=contour.n_points, jmax=0,
                        fd_step=contour.radius / 100.0)
    return round_winding(a[0])


def contour_shift(assembler, contour, delta, phase_rate="sqrt",
                  jacobian="exact", imag_tol=0.05):
    """Cluster sum  sum_i (lambda_i(delta) - center)  of the eigenvalues
    of A_delta inside the contour, from the first moment at finite
    delta.  Returns (shift, multiplicity).

    The continuous problem has real eigenvalues, so the imaginary part
    is a diagnostic; at a finite mesh the zeros of the discretized
    family sit O(mesh error) off the real axis, which is why the default
    relative tolerance is loose rather than at rounding level."""
    def afun(z):
        return assembler.assemble(SpectralParam(z, phase_rate), delta,
                                  jacobian).matrix

    a = contour_moments(afun, contour.center, contour.radius,
                        n_points=contour.n_points, jmax=1,
                        fd_step=contour.radius / 100.0)
    m = round_winding(a[0])
    shift = complex(a[1])
    if abs(shift.imag) > imag_tol * contour.radius * max(m, 1):
        raise ContourThroughEigenvalue(
            f"cluster shift {shift} has non-negligible imaginary part")
    return shift, m


@dataclass
class PerturbationSeries:
    """Second-order expansion of the cluster-mean eigenvalue."""

    lambda0: float
    lambda1: float
    lambda2: float
    multiplicity: int
    contour: Contour
    meta: dict = dc_field(default_factory=dict)

    def evaluate(self, delta):
        return (self.lambda0 + self.lambda1 * delta
                + self.lambda2 * delta * delta)


def lambda_series(assembler, result, contour=None, phase_rate=None,
                  jacobian=None, validate=True):
    """First- and second-order eigenvalue shift coefficients for the
    cluster located by `result`, by log-determinant contour integrals of
    the operator's delta-Taylor coefficients A0, A1, A2."""
    phase_rate = phase_rate or result.meta.get("phase_rate", "sqrt")
    jacobian = jacobian or result.meta.get("jacobian", "exact")
    if contour is None:
        contour = default_contour(result.lambda_star,
                                  gap=0.04 * result.lambda_star)

    def a0fun(z):
        return assembler.assemble(SpectralParam(z, phase_rate), 0.0,
                                  jacobian).matrix

    if validate:
        contour.validate(a0fun, normal_density(assembler.grid))

    m = winding_multiplicity(a0fun, contour)
    if m == 0:
        raise ContourThroughEigenvalue(
            f"contour around {contour.center:g} encloses no eigenvalue")

    t1 = np.zeros(contour.n_points, dtype=complex)
    t2 = np.zeros(contour.n_points, dtype=complex)
    for i, z in enumerate(contour.points):
        param = SpectralParam(z, phase_rate)
        blocks = assembler.assemble_orders(param, 2, jacobian)
        a0, a1, a2 = (b.matrix for b in blocks)
        try:
            lu = lu_factor(a0)
        except Exception as exc:
            raise FactorizationFailure(str(exc)) from exc
        x1 = lu_solve(lu, a1)
        x2 = lu_solve(lu, a2)
        t1[i] = np.trace(x1)
        t2[i] = np.trace(x2) - 0.5 * np.einsum("ij,ji->", x1, x1)

    dz = 1j * (contour.points - contour.center) * 2.0 * np.pi / contour.n_points
    lam1 = -(t1 @ dz) / (2j * np.pi * m)
    lam2 = -(t2 @ dz) / (2j * np.pi * m)
    return PerturbationSeries(
        lambda0=float(result.lambda_star),
        lambda1=float(lam1.real), lambda2=float(lam2.real),
        multiplicity=m, contour=contour,
        meta={"lambda1_imag": float(lam1.imag),
              "lambda2_imag": float(lam2.imag),
              "phase_rate": phase_rate, "jacobian": jacobian})


def lambda_series_reference_forms(assembler, result, contour=None,
                                  phase_rate=None, jacobian=None,
                                  n_points=16):
    """Alternative moment-weighted trace integrals for the shift
    coefficients, with the lambda-derivatives of the operator blocks by
    central finite differences.

    Returned dict holds two variants per order: "consistent" uses the
    signs obtained by differentiating the log-determinant moment
    integral (equivalent to :func:`lambda_series` up to quadrature and
    FD error), while "three_term" is the all-plus, unnormalized
    three-term combination, reported for diagnosis only -- it does not
    reproduce the finite-difference eigenvalue slopes."""
    phase_rate = phase_rate or result.meta.get("phase_rate", "sqrt")
    jacobian = jacobian or result.meta.get("jacobian", "exact")
    if contour is None:
        contour = default_contour(result.lambda_star,
                                  gap=0.04 * result.lambda_star,
                                  n_points=n_points)
    h = contour.radius / 100.0

    def blocks(z):
        param = SpectralParam(z, phase_rate)
        return [b.matrix for b in assembler.assemble_orders(param, 2,
                                                            jacobian)]

    m = None
    s_cons = np.zeros(2, dtype=complex)
    s_three = np.zeros(2, dtype=complex)
    a0_mom = 0.0 + 0.0j
    for z in contour.points:
        b = blocks(z)
        bp = blocks(z + h)
        bm = blocks(z - h)
        d0 = (bp[0] - bm[0]) / (2.0 * h)
        d1 = (bp[1] - bm[1]) / (2.0 * h)
        d2 = (bp[2] - bm[2]) / (2.0 * h)
        try:
            lu = lu_factor(b[0])
        except Exception as exc:
            raise FactorizationFailure(str(exc)) from exc
        x1 = lu_solve(lu, b[1])          # A0^{-1} A1
        x2 = lu_solve(lu, b[2])          # A0^{-1} A2
        y0 = lu_solve(lu, d0)            # A0^{-1} dA0
        y1 = lu_solve(lu, d1)            # A0^{-1} dA1
        y2 = lu_solve(lu, d2)            # A0^{-1} dA2
        w = z - contour.center
        dz = 1j * w * 2.0 * np.pi / contour.n_points
        a0_mom += np.trace(y0) * dz
        tr_x1y0 = np.einsum("ij,ji->", x1, y0)
        tr_x2y0 = np.einsum("ij,ji->", x2, y0)
        tr_x1y1 = np.einsum("ij,ji->", x1, y1)
        tr_x1x1y0 = np.einsum("ij,jk,ki->", x1, x1, y0)
        s_cons[0] += w * (np.trace(y1) - tr_x1y0) * dz
        s_cons[1] += w * (tr_x2y0 + tr_x1y1 - tr_x1x1y0 - np.trace(y2)) * dz
        s_three[0] += w * tr_x1y0 * dz
        s_three[1] += w * (tr_x1y1 + tr_x2y0 + tr_x1x1y0) * dz

    m = round_winding(a0_mom / (2j * np.pi))
    s_cons /= 2j * np.pi
    s_three /= 2j * np.pi
    return {"multiplicity": m,
            "consistent": {"lambda1": float(s_cons[0].real / m),
                           "lambda2": float(-s_cons[1].real / m)},
            "three_term": {"lambda1": float(s_three[0].real),
                           "lambda2": float(s_three[1].real)}}


# ---------------------------------------------------------------------------
# gauge-aligned eigen family and field corrections


def _aligned_family(assembler, result, contour, probe_points, delta,
                    phase_rate, jacobian, v_ref=None, seed=7):
    """(lambda*(delta), v(delta) at probes, p(delta) at probes, residual,
    aligned density phi(delta)).

    The eigen density at delta is the least-squares combination of the
    null cluster basis whose single-layer field best matches `v_ref` at
    the probe points (v_ref=None uses the unperturbed field itself)."""
    def afun(z):
        return assembler.assemble(SpectralParam(z, phase_rate), delta,
                                  jacobian).matrix

    a = contour_moments(afun, contour.center, contour.radius,
                        n_points=contour.n_points, jmax=1,
                        fd_step=contour.radius / 100.0)
    m = round_winding(a[0])
    lam = contour.center + (a[1] / m).real

    op = assembler.assemble(SpectralParam(lam, phase_rate), delta, jacobian)
    nu_hat = normal_density(assembler.grid)
    sig, vec = smallest_singulars(op.matrix, count=max(8, m + 3), seed=seed)
    keep = np.where(np.abs(nu_hat.conj() @ vec) < 0.9)[0][:m]
    basis = vec[:, keep]

    param = SpectralParam(lam, phase_rate)
    cols_v = [op_mod.eval_single_layer(param, assembler, basis[:, j],
                                       probe_points, delta=delta,
                                       jacobian=jacobian).ravel()
              for j in range(m)]
    pmat = np.stack(cols_v, axis=1)
    if v_ref is None:
        coef = np.zeros(m, dtype=complex)
        coef[0] = 1.0
        resid = 0.0
    else:
        coef, _, _, _ = lstsq(pmat, v_ref.ravel())
        fit = pmat @ coef
        resid = float(np.linalg.norm(fit - v_ref.ravel())
                      / max(np.linalg.norm(v_ref), 1e-300))
        if resid > 0.2:
            raise GaugeAlignmentFailure(
                f"cluster basis at delta={delta:g} matches the reference "
                f"field only to relative residual {resid:.3g}")
    phi = basis @ coef
    v = (pmat @ coef).reshape(-1, 3)
    p = op_mod.eval_pressure_potential(assembler, phi, probe_points,
                                       delta=delta, jacobian=jacobian)
    return lam, v, p, resid, phi


def eigenfunction_correction(assembler, result, probe_points, contour=None,
                             step=1e-3, phase_rate=None, jacobian=None,
                             seed=7):
    """(v0, v1, p0, p1) at the probe points: zeroth-order eigen fields
    and their first delta-derivatives, by fourth-order central finite
    differences of the gauge-aligned family.  The pressure is gauged to
    vanish at the first probe point."""
    phase_rate = phase_rate or result.meta.get("phase_rate", "sqrt")
    jacobian = jacobian or result.meta.get("jacobian", "exact")
    if contour is None:
        contour = default_contour(result.lambda_star,
                                  gap=0.04 * result.lambda_star)
    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=float))
    assembler.check_delta(2.0 * step)

    _, v0, p0, _, _ = _aligned_family(assembler, result, contour,
                                      probe_points, 0.0, phase_rate,
                                      jacobian, v_ref=None, seed=seed)
    # interior L2 normalization of the reference field
    scale = _interior_scale(assembler, result, phase_rate, jacobian)
    v0 = v0 * scale
    p0 = (p0 - p0[0]) * scale

    cache = {0.0: (v0, p0)}

    def family(d):
        if d not in cache:
            _, v, p, _, _ = _aligned_family(assembler, result, contour,
                                            probe_points, d, phase_rate,
                                            jacobian, v_ref=v0, seed=seed)
            cache[d] = (v, (p - p[0]))
        return cache[d]

    v1 = richardson_d1(lambda d: family(d)[0], step)
    p1 = richardson_d1(lambda d: family(d)[1], step)
    return v0, v1, p0, p1


def _interior_scale(assembler, result, phase_rate, jacobian, grid_n=10,
                    margin_factor=2.0):
    """Scale making the interior L2 norm of the unperturbed eigen field
    of result.phi approximately one."""
    surface = assembler.grid.surface
    margin = margin_factor * assembler.grid.hbar
    span = np.max(np.linalg.norm(assembler.grid.frame.x, axis=-1))
    axis = np.linspace(-span, span, grid_n)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=-1)
    pts = pts[surface.contains(pts, margin=margin)]
    cell = (2.0 * span / (grid_n - 1)) ** 3
    param = SpectralParam(result.lambda_star, phase_rate)
    v = op_mod.eval_single_layer(param, assembler, result.phi, pts,
                                 delta=0.0, jacobian=jacobian)
    return 1.0 / np.sqrt(float(np.sum(np.abs(v) ** 2) * cell))


def pressure_line_check(assembler, result, series, v0, v1, x_ref, x_end,
                        n_seg=24, fd_step=2e-2, phase_rate=None,
                        jacobian=None):
    """Cross-check of the first-order pressure difference p1(x_end) -
    p1(x_ref) by integrating grad p1 = Lap v1 + lambda0 v1 + lambda1 v0
    along the straight segment between the two points.  v0 and v1 must
    be callables returning fields at arbitrary interior points.  Raises
    PathLeavesDomain if the segment exits the safe interior region."""
    x_ref = np.asarray(x_ref, dtype=float)
    x_end = np.asarray(x_end, dtype=float)
    ts = np.linspace(0.0, 1.0, n_seg + 1)
    path = x_ref[None, :] + ts[:, None] * (x_end - x_ref)[None, :]
    margin = 2.0 * assembler.grid.hbar + 2.0 * fd_step
    if not np.all(assembler.grid.surface.contains(path, margin=margin)):
        raise PathLeavesDomain(
            "integration segment leaves the safe interior region")

    def grad_p1(x):
        lap = np.zeros(3, dtype=complex)
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = fd_step
            lap += (v1(x + e) + v1(x - e) - 2.0 * v1(x)) / fd_step ** 2
        return lap + series.lambda0 * v1(x) + series.lambda1 * v0(x)

    vals = np.stack([grad_p1(x) for x in path])
    dx = (x_end - x_ref) / n_seg
    # trapezoid along the segment
    incr = 0.5 * (vals[:-1] + vals[1:]) @ dx
    return complex(np.sum(incr))
