"""Tensor-product surface quadrature with singular-patch corrections.

The grid is Gauss-Legendre in cos(theta) times uniform periodic phi, so
the weight sum is machine-exact on the sphere.  The weak 1/|x-y| kernel
singularity is handled by a partition of unity: a smooth radial cutoff
eta(|x-y|/R_c) splits each row integral into a far part (plain tensor
rule on (1-eta) * kernel) and a near part integrated in geodesic polar
coordinates around the target, where the sin(s) measure cancels the
singularity.  Densities at off-grid patch points are obtained by local
Lagrange interpolation with pole-crossing row extension.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import SingularAssemblyFailure


def eta_cutoff(t):
    """Smooth compactly supported bump: exp(1 - 1/(1 - t^2)) for |t| < 1,
    0 outside; equals 1 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti ** 2))
    return out


@dataclass
class PatchRule:
    """Geodesic polar quadrature around one target node."""

    node: int
    theta: np.ndarray        # (Q,) chart coordinates of patch points
    phi: np.ndarray
    weight: np.ndarray       # (Q,) combined  mu * sin(s) * w_s * w_alpha
    base_dist: np.ndarray    # (Q,) |x - y_q| on the unperturbed surface
    eta: np.ndarray          # (Q,) cutoff values at base_dist / r_c


class SurfaceGrid:
    """Quadrature node set on a star-shaped surface.

    Nodes are ordered row-major over (theta_i, phi_j); node index
    n = i * n_phi + j.  The 3N degrees of freedom of a vector density
    are ordered node-major: component c of node n sits at 3n + c.
    """

    def __init__(self, surface, n_theta, n_phi=None, stencil=6):
        self.surface = surface
        self.n_theta = int(n_theta)
        self.n_phi = int(n_phi) if n_phi is not None else 2 * self.n_theta
        if self.n_phi % 2:
            raise ValueError("n_phi must be even (pole crossing shifts phi by pi)")
        self.stencil = int(stencil)

        u, wu = leggauss(self.n_theta)
        self.theta = np.arccos(u[::-1])          # ascending in theta
        self._wu = wu[::-1]
        self.phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        self.dphi = 2.0 * np.pi / self.n_phi

        tt, pp = np.meshgrid(self.theta, self.phi, indexing="ij")
        self.frame = surface.frame(tt.ravel(), pp.ravel())
        self.N = self.frame.x.shape[0]
        # dsigma = jac dtheta dphi = (jac / sin(theta)) du dphi
        mu = self.frame.jac / np.sin(self.frame.theta)
        self.weights = mu * np.repeat(self._wu, self.n_phi) * self.dphi
        self.area = float(np.sum(self.weights))
        self.hbar = float(np.sqrt(self.area / self.N))
        self.r_min = float(np.min(np.linalg.norm(self.frame.x, axis=-1)))

        # extended theta rows for pole-crossing interpolation
        m = self.stencil
        low = -self.theta[m - 1::-1]
        high = 2.0 * np.pi - self.theta[:self.n_theta - m - 1:-1]
        self._theta_ext = np.concatenate([low, self.theta, high])
        self._row_ext = np.concatenate([
            np.arange(m - 1, -1, -1),
            np.arange(self.n_theta),
            np.arange(self.n_theta - 1, self.n_theta - m - 1, -1),
        ])
        self._shift_ext = np.concatenate([
            np.ones(m, dtype=int), np.zeros(self.n_theta, dtype=int),
            np.ones(m, dtype=int),
        ])

    # -- interpolation -----------------------------------------------------

    def interp_weights(self, theta_q, phi_q):
        """Sparse interpolation pattern at query chart points.

        Returns (node_idx, w): integer array (Q, stencil^2) of node
        indices and matching Lagrange weights, so that a grid function f
        interpolates as sum_k w[:, k] * f[node_idx[:, k]].
        """
        theta_q = np.atleast_1d(np.asarray(theta_q, dtype=float))
        phi_q = np.atleast_1d(np.asarray(phi_q, dtype=float)) % (2.0 * np.pi)
        st = self.stencil
        q = theta_q.shape[0]

        pos = np.searchsorted(self._theta_ext, theta_q)
        start = np.clip(pos - st // 2, 0, self._theta_ext.size - st)
        rows = start[:, None] + np.arange(st)            # (Q, st) ext rows
        tn = self._theta_ext[rows]                       # (Q, st) node angles
        wt = np.ones((q, st))
        for a in range(st):
            for b in range(st):
                if a != b:
                    wt[:, a] *= (theta_q - tn[:, b]) / (tn[:, a] - tn[:, b])

        tphi = phi_q / self.dphi
        j0 = np.floor(tphi).astype(int)
        t = tphi - j0
        offs = np.arange(st) - (st // 2 - 1)             # e.g. -2..3 for st=6
        wp = np.ones((q, st))
        for a in range(st):
            for b in range(st):
                if a != b:
                    wp[:, a] *= (t - offs[b]) / (offs[a] - offs[b])
        cols = (j0[:, None] + offs) % self.n_phi         # (Q, st)

        orig_row = self._row_ext[rows]                   # (Q, st)
        shift = self._shift_ext[rows] * (self.n_phi // 2)
        # combine: node = orig_row * n_phi + (col + shift) mod n_phi
        col_full = (cols[:, None, :] + shift[:, :, None]) % self.n_phi
        node = orig_row[:, :, None] * self.n_phi + col_full   # (Q, st, st)
        w = wt[:, :, None] * wp[:, None, :]
        return node.reshape(q, st * st), w.reshape(q, st * st)

    def interp_values(self, values, theta_q, phi_q):
        """Interpolate per-node values (N, ...) at chart query points."""
        node, w = self.interp_weights(theta_q, phi_q)
        vals = np.asarray(values)
        gathered = vals[node]                            # (Q, st^2, ...)
        wexp = w.reshape(w.shape + (1,) * (vals.ndim - 1))
        return np.sum(wexp * gathered, axis=1)

    # -- singular patches --------------------------------------------------

    def patch(self, node, r_c, n_s=16, n_alpha=24):
        """Geodesic polar rule covering the cutoff support around a node."""
        xd = self.frame.x[node]
        d0 = xd / np.linalg.norm(xd)
        helper = np.array([0.0, 0.0, 1.0]) if abs(d0[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(d0, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(d0, e1)

        s_max = min(0.45 * np.pi, 2.0 * r_c / self.r_min)
        gs, gw = leggauss(n_s)
        s = 0.5 * s_max * (gs + 1.0)
        ws = 0.5 * s_max * gw
        alpha = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
        walpha = 2.0 * np.pi / n_alpha

        ss, aa = np.meshgrid(s, alpha, indexing="ij")
        wq = np.outer(ws, np.full(n_alpha, walpha)).ravel()
        omega = (np.cos(ss.ravel())[:, None] * d0
                 + np.sin(ss.ravel())[:, None]
                 * (np.cos(aa.ravel())[:, None] * e1
                    + np.sin(aa.ravel())[:, None] * e2))
        theta_q = np.arccos(np.clip(omega[:, 2], -1.0, 1.0))
        phi_q = np.arctan2(omega[:, 1], omega[:, 0]) % (2.0 * np.pi)

        fr = self.surface.frame(theta_q, phi_q)
        sin_tq = np.maximum(np.sin(theta_q), 1e-300)
        mu = fr.jac / sin_tq
        base_dist = np.linalg.norm(self.frame.x[node] - fr.x, axis=-1)
        eta = eta_cutoff(base_dist / r_c)

        # the cutoff support must sit strictly inside the patch
        ring = (np.cos(s_max) * d0
                + np.sin(s_max) * (np.cos(alpha)[:, None] * e1
                                   + np.sin(alpha)[:, None] * e2))
        ring_theta = np.arccos(np.clip(ring[:, 2], -1.0, 1.0))
        ring_phi = np.arctan2(ring[:, 1], ring[:, 0]) % (2.0 * np.pi)
        ring_x = self.surface.frame(ring_theta, ring_phi).x
        ring_dist = np.min(np.linalg.norm(self.frame.x[node] - ring_x, axis=-1))
        if ring_dist < r_c:
            raise SingularAssemblyFailure(
                f"patch of node {node} does not cover the cutoff support "
                f"(ring distance {ring_dist:.3g} < r_c {r_c:.3g})"
            )

        return PatchRule(node=node, theta=theta_q, phi=phi_q,
                         weight=mu * np.sin(ss.ravel()) * wq,
                         base_dist=base_dist, eta=eta), fr

    def export_nodes_csv(self, path):
        """Node table: x,y,z,nx,ny,nz,w."""
        with open(path, "w", newline="") as fh:
            fh.write("x,y,z,nx,ny,nz,w\r\n")
            for p, n, w in zip(self.frame.x, self.frame.normal, self.weights):
                fh.write(",".join(f"{v:.17g}" for v in (*p, *n, w)) + "\r\n")
