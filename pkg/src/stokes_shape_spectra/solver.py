"""Eigenvalue location for the nonlinear family lambda -> A_delta(lambda).

Eigenvalues are the real zeros of the operator family, detected as dips
of the smallest singular value over a lambda grid and then refined by
contour moments of tr[A^{-1} dA/dlambda] (the generalized argument
principle), which also yields the multiplicity as an integer winding
number.

One subtlety: the single-layer family has a lambda-independent discrete
near-null direction along the unit normal density (the static Stokes
single layer annihilates nu exactly, and the oscillatory correction adds
only a gradient field with zero boundary trace).  That direction floors
the raw sigma_min everywhere and would hide the eigen dips, so the scan
characteristic deflates it: modes whose right singular vector lies along
nu are excluded from the reported minimum.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import lu_factor, lu_solve, qr, svd

from .errors import (FactorizationFailure, MultipleDips, NoDipInBracket,
                     NonIntegerWinding)
from .kernels import SpectralParam


def smallest_singulars(matrix, count=8, iters=18, seed=7):
    """Approximate the `count` smallest singular pairs of a dense matrix
    by inverse subspace iteration on (A^H A)^{-1} through one LU
    factorization.  Returns (sigmas ascending, right vectors (n, count))."""
    n = matrix.shape[0]
    try:
        lu = lu_factor(matrix)
    except Exception as exc:  # LinAlgError or ValueError on NaN
        raise FactorizationFailure(str(exc)) from exc
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, count)) + 1j * rng.standard_normal((n, count))
    v, _ = qr(v, mode="economic")
    for _ in range(iters):
        y = lu_solve(lu, v, trans=2)      # A^H y = v
        x = lu_solve(lu, y, trans=0)      # A x = y  =>  x = (A^H A)^{-1} v
        v, _ = qr(x, mode="economic")
    b = matrix @ v
    _, s, wt = svd(b, full_matrices=False)
    order = np.argsort(s)
    return s[order], (v @ wt.conj().T)[:, order]


def normal_density(grid):
    """Unit-norm discrete density along the outward normal."""
    nu = grid.frame.normal.ravel().astype(complex)
    return nu / np.linalg.norm(nu)


def deflated_sigma_min(matrix, nu_hat, count=8, overlap_tol=0.9, seed=7):
    """(sigma_min excluding the nu direction, raw sigma_min, sigmas,
    vectors, overlaps)."""
    sig, vec = smallest_singulars(matrix, count=count, seed=seed)
    overlap = np.abs(nu_hat.conj() @ vec)
    keep = overlap < overlap_tol
    if not np.any(keep):
        smin = sig[-1]
    else:
        smin = sig[keep][0]
    return float(smin), float(sig[0]), sig, vec, overlap


def sigma_min_scan(assembler, lam_grid, delta=0.0, phase_rate="sqrt",
                   jacobian="exact"):
    """Deflated sigma_min over a sorted positive lambda grid."""
    nu_hat = normal_density(assembler.grid)
    out = []
    for lam in lam_grid:
        op = assembler.assemble(SpectralParam(lam, phase_rate), delta,
                                jacobian)
        smin, _, _, _, _ = deflated_sigma_min(op.matrix, nu_hat)
        out.append((float(lam), smin))
    return out


def contour_moments(assemble_fn, center, radius, n_points=16, jmax=1,
                    fd_step=None):
    """Moments a_j = (1/2pi i) oint (z - center)^j tr[A(z)^{-1} A'(z)] dz
    over a circle, with A' by central finite differences.  The trapezoid
    rule on the periodic circle is spectrally accurate."""
    if fd_step is None:
        fd_step = radius / 100.0
    zs = center + radius * np.exp(2j * np.pi * (np.arange(n_points) + 0.5)
                                  / n_points)
    a = np.zeros(jmax + 1, dtype=complex)
    for z in zs:
        az = assemble_fn(z)
        da = (assemble_fn(z + fd_step) - assemble_fn(z - fd_step)) / (2.0 * fd_step)
        try:
            lu = lu_factor(az)
        except Exception as exc:
            raise FactorizationFailure(str(exc)) from exc
        tr = np.trace(lu_solve(lu, da))
        dz = 1j * (z - center) * 2.0 * np.pi / n_points
        for j in range(jmax + 1):
            a[j] += (z - center) ** j * tr * dz
    return a / (2j * np.pi)


def round_winding(a0, tol=0.05):
    m = int(round(a0.real))
    if abs(a0 - m) > tol:
        raise NonIntegerWinding(f"winding {a0} not within {tol} of an integer")
    return m


@dataclass
class EigenResult:
    """Converged eigenvalue with its null density."""

    lambda_star: float
    phi: np.ndarray
    sigma_min: float
    multiplicity: int
    n_nodes: int
    delta: float
    meta: dict = dc_field(default_factory=dict)


def _golden_minimize(fun, lo, hi, xtol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (a + b) / 2.0


def _gap_multiplicity(sigmas):
    """Cluster size from the largest ratio gap in ascending sigmas."""
    s = np.asarray(sigmas, dtype=float)
    ratios = s[1:] / np.maximum(s[:-1], 1e-300)
    return int(np.argmax(ratios)) + 1


def find_eigen(assembler, bracket, delta=0.0, phase_rate="sqrt",
               jacobian="exact", tol=1e-8, refine="contour",
               contour_points=32, seed=7):
    """Locate the single eigenvalue (cluster) inside the bracket.

    refine="contour" (default): the winding number over the bracket
    circle counts the zeros (0 -> NoDipInBracket); the first moment
    gives the cluster mean, the second the cluster spread (a large
    spread means two distinct eigenvalues -> MultipleDips); a second,
    tighter contour polishes the mean.  refine="golden" skips the
    contour linear algebra (cheaper at large meshes): coarse sampling of
    the deflated sigma_min followed by golden-section minimization, with
    the multiplicity read from the singular-value gap structure.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    nu_hat = normal_density(assembler.grid)

    def afun(z):
        return assembler.assemble(SpectralParam(z, phase_rate), delta,
                                  jacobian).matrix

    if refine == "contour":
        center, radius = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for n_pts in (contour_points, 2 * contour_points):
            a = contour_moments(afun, center, radius, n_points=n_pts, jmax=2)
            try:
                mult = round_winding(a[0])
                break
            except NonIntegerWinding:
                if n_pts == 2 * contour_points:
                    raise
        if mult == 0:
            raise NoDipInBracket(
                f"no operator zero inside [{lo:g}, {hi:g}] (winding 0)")
        mean = (a[1] / mult).real
        spread = float(np.sqrt(max(0.0, (a[2] / mult).real - mean ** 2)))
        if spread > 0.08 * (hi - lo):
            raise MultipleDips(
                f"zero cluster spread {spread:.3g} suggests distinct "
                f"eigenvalues inside [{lo:g}, {hi:g}]")
        # polish with a tighter circle; a discrete multiplet splits by an
        # a-priori unknown amount, so grow the radius until the tight
        # circle recovers the full cluster
        lam_star = center + mean
        r2 = max(5.0 * spread, 0.02 * (hi - lo))
        while r2 < radius:
            try:
                a2 = contour_moments(afun, center + mean, r2, n_points=16)
                if round_winding(a2[0]) == mult:
                    lam_star = center + mean + (a2[1] / mult).real
                    break
            except NonIntegerWinding:
                pass
            r2 *= 1.8
    elif refine == "golden":
        cache = {}

        def smin(lam):
            if lam not in cache:
                cache[lam] = deflated_sigma_min(afun(lam), nu_hat,
                                                seed=seed)[0]
            return cache[lam]

        coarse = max(17, int(np.ceil((hi - lo) / 0.04)) + 1)
        grid = np.linspace(lo, hi, coarse)
        vals = np.array([smin(g) for g in grid])
        ref = np.median(vals)
        dips = [i for i in range(1, coarse - 1)
                if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]
                and vals[i] < 0.6 * ref]
        if not dips:
            raise NoDipInBracket(
                f"no sigma_min dip inside [{lo:g}, {hi:g}] "
                f"(min {vals.min():.3g} vs median {ref:.3g})")
        if len(dips) > 1:
            raise MultipleDips(f"{len(dips)} dips inside [{lo:g}, {hi:g}]")
        i = dips[0]
        lam_star = _golden_minimize(smin, grid[i - 1], grid[i + 1], tol)
        mult = None
    else:
        raise ValueError(f"unknown refine mode {refine!r}")

    op = assembler.assemble(SpectralParam(lam_star, phase_rate), delta,
                            jacobian)
    smin_v, _, sig, vec, overlap = deflated_sigma_min(op.matrix, nu_hat,
                                                      count=12, seed=seed)
    keep = overlap < 0.9
    if mult is None:
        mult = _gap_multiplicity(sig[keep])
    phi = vec[:, keep][:, 0]
    phi = phi / np.linalg.norm(phi)
    return EigenResult(lambda_star=float(lam_star), phi=phi,
                       sigma_min=smin_v, multiplicity=mult,
                       n_nodes=assembler.grid.N, delta=float(delta),
                       meta={"phase_rate": phase_rate, "jacobian": jacobian,
                             "sigma_tail": sig.tolist(),
                             "nu_overlap": overlap.tolist()})


def cluster_null_basis(assembler, result, count=None, seed=7):
    """Orthonormal basis of the null cluster (the `multiplicity` right
    singular vectors with smallest non-nu sigma) at the converged
    eigenvalue."""
    op = assembler.assemble(SpectralParam(result.lambda_star,
                                          result.meta.get("phase_rate", "sqrt")),
                            result.delta, result.meta.get("jacobian", "exact"))
    nu_hat = normal_density(assembler.grid)
    m = count if count is not None else result.multiplicity
    sig, vec = smallest_singulars(op.matrix, count=max(8, m + 3), seed=seed)
    overlap = np.abs(nu_hat.conj() @ vec)
    keep = np.where(overlap < 0.9)[0][:m]
    basis, _ = qr(vec[:, keep], mode="economic")
    return basis


def reconstruct_eigenpair(assembler, result, probe_points, grid_n=10,
                          margin_factor=2.0):
    """Velocity and pressure samples of the eigenpair candidate at probe
    points, normalized so the interior L2 norm of v is ~1 (estimated on
    a grid_n^3 Cartesian grid clipped to the domain)."""
    from . import operators as op_mod

    param = SpectralParam(result.lambda_star,
                          result.meta.get("phase_rate", "sqrt"))
    jac = result.meta.get("jacobian", "exact")
    surface = assembler.grid.surface
    margin = margin_factor * assembler.grid.hbar

    # interior normalization grid
    span = np.max(np.linalg.norm(assembler.grid.frame.x, axis=-1))
    axis = np.linspace(-span, span, grid_n)
    xx, yy, zz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=-1)
    inside = surface.contains(pts, margin=margin)
    pts = pts[inside]
    cell = (2.0 * span / (grid_n - 1)) ** 3
    v_grid = op_mod.eval_single_layer(param, assembler, result.phi, pts,
                                      delta=result.delta, jacobian=jac)
    norm2 = float(np.sum(np.abs(v_grid) ** 2) * cell)
    scale = 1.0 / np.sqrt(norm2)

    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=float))
    v = op_mod.eval_single_layer(param, assembler, result.phi, probe_points,
                                 delta=result.delta, jacobian=jac) * scale
    p = op_mod.eval_pressure_potential(assembler, result.phi, probe_points,
                                       delta=result.delta,
                                       jacobian=jac) * scale
    return v, p, scale
