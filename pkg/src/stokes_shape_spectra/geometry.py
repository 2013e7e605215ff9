"""Star-shaped closed C^2 surfaces, normal perturbation fields, and the
purely geometric delta-expansions (Jacobian polynomial, surface-element
series, normal series, the difference field Theta).

Surfaces are charts (theta, phi) -> r(theta, phi) * direction(theta, phi)
over the full sphere of directions.  Everything is vectorized over
parameter arrays so the singular-quadrature patches can query geometry at
arbitrary off-node points.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import series as ps
from .errors import DeltaOutOfRange

# Step for chart-parameter differentiation of smooth fields (normal
# vector, rho*nu).  Fourth-order central stencils at this step give
# ~1e-11 absolute accuracy on desk-scale surfaces.
_FD_STEP = 1e-4


def _direction(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    d = np.stack([st * cp, st * sp, ct], axis=-1)
    d_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    d_phi = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
    return d, d_theta, d_phi


class Surface:
    """Base class: subclasses provide r(theta, phi) and its first
    parameter derivatives."""

    name = "surface"

    def radial(self, theta, phi):
        raise NotImplementedError

    def position(self, theta, phi):
        r, _, _ = self.radial(theta, phi)
        d, _, _ = _direction(theta, phi)
        return r[..., None] * d

    def contains(self, points, margin=0.0):
        """Star-shaped inside test: |x| < r(direction of x) - margin."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        nrm = np.linalg.norm(points, axis=-1)
        theta = np.arccos(np.clip(points[:, 2] / np.maximum(nrm, 1e-300),
                                  -1.0, 1.0))
        phi = np.arctan2(points[:, 1], points[:, 0]) % (2.0 * np.pi)
        r, _, _ = self.radial(theta, phi)
        return nrm < r - margin

    def frame(self, theta, phi):
        """Position, (non-unit) tangents, outward unit normal and area
        element |t1 x t2| at the given chart points."""
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        r, rt, rp = self.radial(theta, phi)
        d, d_theta, d_phi = _direction(theta, phi)
        x = r[..., None] * d
        t1 = rt[..., None] * d + r[..., None] * d_theta
        t2 = rp[..., None] * d + r[..., None] * d_phi
        cross = np.cross(t1, t2)
        jac = np.linalg.norm(cross, axis=-1)
        normal = cross / np.where(jac == 0.0, 1.0, jac)[..., None]
        return SurfaceFrame(theta=theta, phi=phi, x=x, t1=t1, t2=t2,
                            normal=normal, jac=jac)


@dataclass
class SurfaceFrame:
    """Geometry of a batch of surface points."""

    theta: np.ndarray
    phi: np.ndarray
    x: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    normal: np.ndarray
    jac: np.ndarray


class Sphere(Surface):
    name = "sphere"

    def __init__(self, radius=1.0):
        self.radius = float(radius)

    def radial(self, theta, phi):
        r = np.full(np.broadcast(theta, phi).shape, self.radius)
        z = np.zeros_like(r)
        return r, z, z


class Ellipsoid(Surface):
    """Axis-aligned ellipsoid (x/a)^2 + (y/b)^2 + (z/c)^2 = 1 in its
    star-shaped radial form."""

    name = "ellipsoid"

    def __init__(self, a=1.0, b=1.0, c=1.0):
        self.a, self.b, self.c = float(a), float(b), float(c)

    def radial(self, theta, phi):
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        qa = (st * cp / self.a) ** 2
        qb = (st * sp / self.b) ** 2
        qc = (ct / self.c) ** 2
        q = qa + qb + qc
        # dq/dtheta and dq/dphi by hand
        q_t = 2.0 * st * ct * ((cp / self.a) ** 2 + (sp / self.b) ** 2) \
            - 2.0 * ct * st / self.c ** 2
        q_p = 2.0 * st ** 2 * sp * cp * (1.0 / self.b ** 2 - 1.0 / self.a ** 2)
        r = q ** -0.5
        rt = -0.5 * q ** -1.5 * q_t
        rp = -0.5 * q ** -1.5 * q_p
        return r, rt, rp


class BumpySphere(Surface):
    """r = 1 + eps * (d3^2 + d1*d2): a smooth trigonometric-polynomial
    bump pattern with no rotational symmetry."""

    name = "bumpy_sphere"

    def __init__(self, eps=0.1):
        self.eps = float(eps)

    def radial(self, theta, phi):
        d, d_theta, d_phi = _direction(theta, phi)
        f = d[..., 2] ** 2 + d[..., 0] * d[..., 1]

        def df(dd):
            return (2.0 * d[..., 2] * dd[..., 2]
                    + dd[..., 0] * d[..., 1] + d[..., 0] * dd[..., 1])

        r = 1.0 + self.eps * f
        return r, self.eps * df(d_theta), self.eps * df(d_phi)


# ---------------------------------------------------------------------------
# Perturbation amplitude fields rho(x)


class RhoField:
    """Scalar amplitude field on the surface with a hand-coded ambient
    gradient (no surface autodiff)."""

    name = "rho"

    def __init__(self, amplitude=1.0):
        self.amplitude = float(amplitude)

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError


class ConstantRho(RhoField):
    name = "constant"

    def value(self, x):
        return np.full(x.shape[:-1], self.amplitude)

    def grad(self, x):
        return np.zeros_like(x)


class X3Rho(RhoField):
    name = "x3"

    def value(self, x):
        return self.amplitude * x[..., 2]

    def grad(self, x):
        g = np.zeros_like(x)
        g[..., 2] = self.amplitude
        return g


class X3SquaredRho(RhoField):
    name = "x3_squared"

    def value(self, x):
        return self.amplitude * x[..., 2] ** 2

    def grad(self, x):
        g = np.zeros_like(x)
        g[..., 2] = 2.0 * self.amplitude * x[..., 2]
        return g


class TrigBumpRho(RhoField):
    """Smooth bump exp((cos(angle to (theta0, phi0)) - 1)/width^2) on the
    unit direction of x."""

    name = "trig_bump"

    def __init__(self, theta0=0.7, phi0=0.3, width=0.5, amplitude=1.0):
        super().__init__(amplitude)
        self.theta0, self.phi0, self.width = float(theta0), float(phi0), float(width)
        d, _, _ = _direction(np.asarray(self.theta0), np.asarray(self.phi0))
        self._d = d

    def value(self, x):
        nrm = np.linalg.norm(x, axis=-1)
        c = np.einsum("...i,i->...", x, self._d) / nrm
        return self.amplitude * np.exp((c - 1.0) / self.width ** 2)

    def grad(self, x):
        nrm = np.linalg.norm(x, axis=-1)
        xhat = x / nrm[..., None]
        c = np.einsum("...i,i->...", xhat, self._d)
        val = self.amplitude * np.exp((c - 1.0) / self.width ** 2)
        dc = (self._d - c[..., None] * xhat) / nrm[..., None]
        return (val / self.width ** 2)[..., None] * dc


RHO_CATALOG = {
    "constant": ConstantRho,
    "x3": X3Rho,
    "x3_squared": X3SquaredRho,
    "trig_bump": TrigBumpRho,
}


# ---------------------------------------------------------------------------
# Perturbation field rho * nu and its ambient Jacobian M


class PerturbationField:
    """rho on a given surface together with the matrix field
    M = grad(rho nu) of the homothetic normal extension (the extension
    with d/dn (rho nu) = rho nu, which for rho == 1 on the unit sphere
    reduces rho nu to the identity field and M to the identity matrix)."""

    def __init__(self, surface, rho):
        self.surface = surface
        self.rho = rho

    def rho_values(self, frame):
        return self.rho.value(frame.x)

    def rho_nu(self, frame):
        return self.rho.value(frame.x)[..., None] * frame.normal

    def _rho_nu_at(self, theta, phi):
        fr = self.surface.frame(theta, phi)
        return self.rho.value(fr.x)[..., None] * fr.normal

    def matrix(self, frame):
        """Ambient Jacobian M(y) with tangential action fixed by the chart
        and normal column rho*nu; shape (..., 3, 3)."""
        theta, phi = frame.theta, frame.phi
        h = _FD_STEP

        def d4(fun, t, p, dt, dp):
            return (-fun(t + 2 * dt, p + 2 * dp) + 8.0 * fun(t + dt, p + dp)
                    - 8.0 * fun(t - dt, p - dp) + fun(t - 2 * dt, p - 2 * dp)) / (12.0 * h)

        f_theta = d4(self._rho_nu_at, theta, phi, h, 0.0)
        f_phi = d4(self._rho_nu_at, theta, phi, 0.0, h)

        t1n = np.linalg.norm(frame.t1, axis=-1)[..., None]
        t2n = np.linalg.norm(frame.t2, axis=-1)[..., None]
        # Columns scaled to unit length so the solve stays well conditioned
        # near the chart poles where |t2| ~ sin(theta).
        basis = np.stack([frame.t1 / t1n, frame.t2 / t2n, frame.normal], axis=-1)
        rhs = np.stack([f_theta / t1n, f_phi / t2n, self.rho_nu(frame)], axis=-1)
        return rhs @ np.linalg.inv(basis)

    def grad_rho_tangential(self, frame):
        g = self.rho.grad(frame.x)
        gn = np.einsum("...i,...i->...", g, frame.normal)
        return g - gn[..., None] * frame.normal

    def theta_vec(self, frame_x, frame_y):
        """Theta(x, y) = rho(x) nu(x) - rho(y) nu(y) (delta-independent)."""
        return self.rho_nu(frame_x) - self.rho_nu(frame_y)

    def c2_norm_proxy(self, frame):
        """Discrete stand-in for ||rho||_{C^2}: max over the frame points
        of |rho| + |grad_S rho| + ||tangential Hessian estimate||_F."""
        rho = np.abs(self.rho_values(frame))
        grad = self.grad_rho_tangential(frame)
        gmag = np.linalg.norm(grad, axis=-1)

        def tangential_grad_at(theta, phi):
            fr = self.surface.frame(theta, phi)
            g = self.rho.grad(fr.x)
            gn = np.einsum("...i,...i->...", g, fr.normal)
            return g - gn[..., None] * fr.normal

        h = _FD_STEP

        def d4(fun, t, p, dt, dp):
            return (-fun(t + 2 * dt, p + 2 * dp) + 8.0 * fun(t + dt, p + dp)
                    - 8.0 * fun(t - dt, p - dp) + fun(t - 2 * dt, p - 2 * dp)) / (12.0 * h)

        g_theta = d4(tangential_grad_at, frame.theta, frame.phi, h, 0.0)
        g_phi = d4(tangential_grad_at, frame.theta, frame.phi, 0.0, h)
        t1n = np.linalg.norm(frame.t1, axis=-1)[..., None]
        t2n = np.linalg.norm(frame.t2, axis=-1)[..., None]
        basis = np.stack([frame.t1 / t1n, frame.t2 / t2n, frame.normal], axis=-1)
        rhs = np.stack([g_theta / t1n, g_phi / t2n, np.zeros_like(g_theta)], axis=-1)
        jac = rhs @ np.linalg.inv(basis)
        proj = np.eye(3) - frame.normal[..., :, None] * frame.normal[..., None, :]
        hess = proj @ (0.5 * (jac + np.swapaxes(jac, -1, -2))) @ proj
        hmag = np.linalg.norm(hess, axis=(-2, -1))
        return float(np.max(rho + gmag + hmag))


def shape_operator_norm(surface, frame):
    """sup over the frame points of the spectral norm of the tangential
    Jacobian of the unit normal (curvature proxy for the delta budget)."""
    unit = PerturbationField(surface, ConstantRho(1.0))
    m = unit.matrix(frame)
    proj = np.eye(3) - frame.normal[..., :, None] * frame.normal[..., None, :]
    w = proj @ m @ proj
    return float(np.max(np.linalg.svd(w, compute_uv=False)[..., 0]))


# ---------------------------------------------------------------------------
# Geometric delta-expansions


def psi_delta(frame, field, delta):
    """Deformation map x + delta rho(x) nu(x) at the frame points."""
    return frame.x + delta * field.rho_nu(frame)


def jacobian_det_paper(m, delta):
    """Cubic polynomial det(I + delta M) written through traces:
    1 + tr(M) d + (1/2)[(tr M)^2 - tr(M^2)] d^2 + det(M) d^3."""
    m = np.asarray(m)
    tr = np.trace(m, axis1=-2, axis2=-1)
    tr2 = np.trace(m @ m, axis1=-2, axis2=-1)
    det = np.linalg.det(m)
    return 1.0 + tr * delta + 0.5 * (tr ** 2 - tr2) * delta ** 2 + det * delta ** 3


def surface_element_series(m):
    """(sigma_0, sigma_1, sigma_2, sigma_3) of the trace-polynomial
    surface element; coefficients of jacobian_det_paper by definition."""
    m = np.asarray(m)
    tr = np.trace(m, axis1=-2, axis2=-1)
    tr2 = np.trace(m @ m, axis1=-2, axis2=-1)
    det = np.linalg.det(m)
    return (np.ones_like(tr), tr, 0.5 * (tr ** 2 - tr2), det)


def _tangent_cross_coeffs(frame, m):
    """a, b, c with t1^d x t2^d = a + delta b + delta^2 c."""
    mt1 = np.einsum("...ij,...j->...i", m, frame.t1)
    mt2 = np.einsum("...ij,...j->...i", m, frame.t2)
    a = np.cross(frame.t1, frame.t2)
    b = np.cross(mt1, frame.t2) + np.cross(frame.t1, mt2)
    c = np.cross(mt1, mt2)
    return a, b, c


def surface_element_exact(frame, m, delta):
    """True area-element ratio |t1^d x t2^d| / |t1 x t2| of the deformed
    surface (uses only the tangential action of M)."""
    a, b, c = _tangent_cross_coeffs(frame, m)
    num = a + delta * b + delta ** 2 * c
    return np.linalg.norm(num, axis=-1) / np.linalg.norm(a, axis=-1)


def surface_element_exact_series(frame, m, order=ps.DEFAULT_ORDER):
    """Delta-series of the exact area-element ratio (order+1, ...)."""
    a, b, c = _tangent_cross_coeffs(frame, m)
    aa = np.einsum("...i,...i->...", a, a)
    s = np.zeros((order + 1,) + aa.shape, dtype=complex)
    s[0] = aa
    if order >= 1:
        s[1] = 2.0 * np.einsum("...i,...i->...", a, b)
    if order >= 2:
        s[2] = (np.einsum("...i,...i->...", b, b)
                + 2.0 * np.einsum("...i,...i->...", a, c))
    if order >= 3:
        s[3] = 2.0 * np.einsum("...i,...i->...", b, c)
    if order >= 4:
        s[4] = np.einsum("...i,...i->...", c, c)
    return ps.sqrt(s) / np.sqrt(aa)


def surface_element_paper_series(m, order=ps.DEFAULT_ORDER):
    """Trace-polynomial element convention as a series array (orders > 3
    are 0); the counterpart of the exact tangential-pullback series."""
    sigma = surface_element_series(m)
    out = np.zeros((order + 1,) + np.shape(sigma[1]), dtype=complex)
    for n in range(min(order, 3) + 1):
        out[n] = sigma[n]
    return out


def normal_series(frame, m):
    """(nu0, nu1) of the deformed unit normal; nu1 is tangential."""
    a, b, _ = _tangent_cross_coeffs(frame, m)
    amag = np.linalg.norm(a, axis=-1)[..., None]
    nu0 = frame.normal
    bn = np.einsum("...i,...i->...", nu0, b)[..., None]
    nu1 = (b - bn * nu0) / amag
    return nu0, nu1


# ---------------------------------------------------------------------------


@dataclass
class DeformedSurface:
    """Base surface + perturbation field + amplitude delta."""

    base: Surface
    field: PerturbationField
    delta: float
    _delta0: float = dc_field(default=None, repr=False)

    def delta0(self, frame):
        """Injectivity budget 0.9 / (sup ||M|| + sup |rho| * curvature)."""
        if self._delta0 is None:
            m = self.field.matrix(frame)
            mnorm = float(np.max(np.linalg.svd(m, compute_uv=False)[..., 0]))
            rmax = float(np.max(np.abs(self.field.rho_values(frame))))
            curv = shape_operator_norm(self.base, frame)
            self._delta0 = 0.9 / (mnorm + rmax * curv + 1e-300)
        return self._delta0

    def check_delta(self, frame):
        budget = self.delta0(frame)
        if abs(self.delta) >= budget:
            raise DeltaOutOfRange(
                f"|delta|={abs(self.delta):g} exceeds injectivity budget {budget:g}"
            )

    def positions(self, frame):
        return psi_delta(frame, self.field, self.delta)

    def element_ratio(self, frame, m=None, jacobian="exact"):
        if m is None:
            m = self.field.matrix(frame)
        if jacobian == "paper":
            return jacobian_det_paper(m, self.delta)
        return surface_element_exact(frame, m, self.delta)

    def deformed_normal(self, frame, m=None):
        """Exact unit normal of the deformed surface at psi(x)."""
        if m is None:
            m = self.field.matrix(frame)
        mt1 = np.einsum("...ij,...j->...i", m, frame.t1)
        mt2 = np.einsum("...ij,...j->...i", m, frame.t2)
        t1d = frame.t1 + self.delta * mt1
        t2d = frame.t2 + self.delta * mt2
        cross = np.cross(t1d, t2d)
        return cross / np.linalg.norm(cross, axis=-1)[..., None]
