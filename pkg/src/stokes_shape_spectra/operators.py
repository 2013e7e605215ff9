"""Nystrom assembly of the single-layer velocity operator family and its
delta-expansion operators, plus off-boundary potential evaluation.

An assembler instance precomputes everything that depends only on the
(grid, perturbation field, patch parameters) triple — singular patches,
interpolation stencils, ambient Jacobians M, cutoff values — and caches
per-delta "geometry packs" (pair distances, direction outer products,
quadrature factors) so that re-assembling at a new lambda costs only
elementwise kernel evaluations.  Crucially, the perturbed operator
A_delta and the expansion operators A^(n) share the same nodes, weights,
cutoff and patches, which makes the discrete family analytic in delta
with the A^(n) as its exact Taylor coefficients.
"""

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import geometry as ge
from . import kernels as kn
from . import series as ps
from .errors import TooCloseToBoundary
from .quadrature import eta_cutoff

_MAGIC = b"STKOP1"


@dataclass
class DenseComplexOperator:
    """Dense Nystrom matrix of a 3-vector boundary operator."""

    matrix: np.ndarray
    lam: complex
    delta: float
    meta: dict = dc_field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.matrix.shape[0] // 3

    def apply(self, phi):
        return self.matrix @ phi


def _kernel_parts(param, r):
    """Isotropic and direction-outer radial factors of the Stokeslet:
    Gamma = [iso * I + aniso * rhat rhat^T] / 4pi."""
    lam, k = param.lam, param.k
    e = np.exp(1j * k * r)
    g1r = (1j * k * r * e - e + 1.0) / r ** 3      # g'(r)/r
    g2 = (-k ** 2 * e / r - 2j * k * e / r ** 2
          + 2.0 * (e - 1.0) / r ** 3)              # g''(r)
    iso = e / r + g1r / lam
    aniso = (g2 - g1r) / lam
    return iso / kn.FOUR_PI, aniso / kn.FOUR_PI


class NystromAssembler:
    """Caches geometry-only data and assembles A_delta(lambda), A^(n)."""

    def __init__(self, grid, field, patch_factor=4.0, n_s=16, n_alpha=24,
                 row_chunk=128):
        self.grid = grid
        self.field = field
        self.r_c = patch_factor * grid.hbar
        self.row_chunk = int(row_chunk)
        fr = grid.frame
        self.rho_nu = field.rho_nu(fr).astype(float)
        self.m_nodes = field.matrix(fr)
        self.sigma_nodes = ge.surface_element_exact_series(fr, self.m_nodes)
        self.sigma_nodes_paper = ge.surface_element_paper_series(self.m_nodes)

        diff = fr.x[:, None, :] - fr.x[None, :, :]
        base_dist = np.linalg.norm(diff, axis=-1)
        self.eta_far = eta_cutoff(base_dist / self.r_c)
        np.fill_diagonal(self.eta_far, 1.0)   # diagonal handled by patches

        self.patches = []
        for node in range(grid.N):
            rule, frq = grid.patch(node, self.r_c, n_s=n_s, n_alpha=n_alpha)
            idx, w = grid.interp_weights(rule.theta, rule.phi)
            mq = field.matrix(frq)
            self.patches.append({
                "rule": rule,
                "x": frq.x,
                "rho_nu": field.rho_nu(frq).astype(float),
                "m": mq,
                "sigma": ge.surface_element_exact_series(frq, mq),
                "sigma_paper": ge.surface_element_paper_series(mq),
                "interp_idx": idx,
                "interp_w": w,
            })
        self._idx = np.stack([p["interp_idx"] for p in self.patches])
        self._w = np.stack([p["interp_w"] for p in self.patches])
        self._pack_cache = {}

    # -- helpers -----------------------------------------------------------

    def _sigma(self, patch, jacobian):
        key = "sigma" if jacobian == "exact" else "sigma_paper"
        return patch[key] if patch is not None else (
            self.sigma_nodes if jacobian == "exact" else self.sigma_nodes_paper)

    def check_delta(self, delta):
        ge.DeformedSurface(self.grid.surface, self.field, delta).check_delta(
            self.grid.frame)

    def deformed_nodes(self, delta, jacobian="exact"):
        """Node positions and element ratios of the delta-surface."""
        pos = self.grid.frame.x + delta * self.rho_nu
        ratio = ps.evaluate(self._sigma(None, jacobian), delta).real
        return pos, ratio

    def _pack(self, delta, jacobian):
        """Lambda-independent pair geometry at a fixed delta."""
        key = (float(delta), jacobian)
        if key in self._pack_cache:
            return self._pack_cache[key]
        if delta != 0.0:
            self.check_delta(delta)
        n = self.grid.N
        pos, ratio = self.deformed_nodes(delta, jacobian)
        diff = pos[:, None, :] - pos[None, :, :]
        idx = np.arange(n)
        diff[idx, idx] = np.array([1.0, 0.0, 0.0])
        r = np.linalg.norm(diff, axis=-1)
        uu = diff[..., :, None] * diff[..., None, :] / (r ** 2)[..., None, None]
        fac = (1.0 - self.eta_far) * (self.grid.weights * ratio)
        fac[idx, idx] = 0.0

        near_r, near_uu, near_fac = [], [], []
        for node in range(n):
            p = self.patches[node]
            rule = p["rule"]
            yq = p["x"] + delta * p["rho_nu"]
            dq = pos[node] - yq
            rq = np.linalg.norm(dq, axis=-1)
            near_r.append(rq)
            near_uu.append(dq[..., :, None] * dq[..., None, :]
                           / (rq ** 2)[..., None, None])
            ratio_q = ps.evaluate(self._sigma(p, jacobian), delta).real
            near_fac.append(rule.eta * rule.weight * ratio_q)
        pack = {
            "pos": pos, "ratio": ratio, "r": r, "uu": uu, "fac": fac,
            "near_r": np.stack(near_r), "near_uu": np.stack(near_uu),
            "near_fac": np.stack(near_fac),
        }
        if len(self._pack_cache) >= 3:
            self._pack_cache.pop(next(iter(self._pack_cache)))
        self._pack_cache[key] = pack
        return pack

    # -- assembly ----------------------------------------------------------

    def assemble(self, param, delta=0.0, jacobian="exact"):
        """Dense matrix of A_delta(lambda) (3N x 3N)."""
        pack = self._pack(delta, jacobian)
        n = self.grid.N
        eye = np.eye(3)
        out = np.empty((3 * n, 3 * n), dtype=complex)

        for lo in range(0, n, self.row_chunk):
            hi = min(lo + self.row_chunk, n)
            iso, aniso = _kernel_parts(param, pack["r"][lo:hi])
            fac = pack["fac"][lo:hi]
            block = (eye * (iso * fac)[..., None, None]
                     + pack["uu"][lo:hi] * (aniso * fac)[..., None, None])
            out[3 * lo:3 * hi] = (
                block.transpose(0, 2, 1, 3).reshape(3 * (hi - lo), 3 * n))

        iso, aniso = _kernel_parts(param, pack["near_r"])
        nf = pack["near_fac"]
        coef = (eye * (iso * nf)[..., None, None]
                + pack["near_uu"] * (aniso * nf)[..., None, None])
        self._scatter(out, coef)
        return DenseComplexOperator(out, param.lam, float(delta),
                                    meta={"jacobian": jacobian,
                                          "phase_rate": param.phase_rate})

    def assemble_orders(self, param, order_n, jacobian="exact"):
        """Dense matrices of the expansion operators A^(0)..A^(n), n <= 2,
        from one pass over the kernel series."""
        ps.require_order(order_n, 2)
        grid = self.grid
        n = grid.N
        fr = grid.frame
        outs = [np.zeros((3 * n, 3 * n), dtype=complex)
                for _ in range(order_n + 1)]

        for lo in range(0, n, self.row_chunk):
            hi = min(lo + self.row_chunk, n)
            diff = fr.x[lo:hi, None, :] - fr.x[None, :, :]
            rows = np.arange(lo, hi)
            diff[rows - lo, rows] = np.array([1.0, 0.0, 0.0])  # masked below
            theta = self.rho_nu[lo:hi, None, :] - self.rho_nu[None, :, :]
            sigma = self._sigma(None, jacobian)[:, None, :]
            gser = kn.gamma_series(param, diff, theta, sigma, order=order_n)
            fac = (1.0 - self.eta_far[lo:hi]) * grid.weights
            fac[rows - lo, rows] = 0.0
            for m in range(order_n + 1):
                block = gser[m] * fac[..., None, None]
                outs[m][3 * lo:3 * hi] = (
                    block.transpose(0, 2, 1, 3).reshape(3 * (hi - lo), 3 * n))

        coefs = [[] for _ in range(order_n + 1)]
        for node in range(n):
            p = self.patches[node]
            rule = p["rule"]
            diff = fr.x[node] - p["x"]
            theta = self.rho_nu[node] - p["rho_nu"]
            gser = kn.gamma_series(param, diff, theta,
                                   self._sigma(p, jacobian), order=order_n)
            for m in range(order_n + 1):
                coefs[m].append(gser[m]
                                * (rule.eta * rule.weight)[:, None, None])
        for m in range(order_n + 1):
            self._scatter(outs[m], np.stack(coefs[m]))
        return [DenseComplexOperator(outs[m], param.lam, 0.0,
                                     meta={"order": m, "jacobian": jacobian,
                                           "phase_rate": param.phase_rate})
                for m in range(order_n + 1)]

    def assemble_order(self, param, order_n, jacobian="exact"):
        """Dense matrix of the expansion operator A^(n), n <= 2."""
        return self.assemble_orders(param, order_n, jacobian)[order_n]

    def _scatter(self, out, coef):
        """Accumulate near-field contributions coef (N, Q, 3, 3) against
        the interpolation stencils into the matching row blocks."""
        n = self.grid.N
        for node in range(n):
            vals = (coef[node][:, None, :, :]
                    * self._w[node][:, :, None, None]).reshape(-1, 9)
            acc = np.zeros((n, 9), dtype=complex)
            np.add.at(acc, self._idx[node].ravel(), vals)
            acc = acc.reshape(n, 3, 3)
            out[3 * node:3 * node + 3] += (
                acc.transpose(1, 0, 2).reshape(3, 3 * n))


# ---------------------------------------------------------------------------
# Off-boundary potentials


def _check_distance(points, positions, spacing):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dmin = np.min(np.linalg.norm(points[:, None, :] - positions[None], axis=-1))
    if dmin < 2.0 * spacing:
        raise TooCloseToBoundary(
            f"evaluation point within 2 node spacings of the surface "
            f"({dmin:.3g} < {2.0 * spacing:.3g})")
    return points


def eval_single_layer(param, assembler, phi, points, delta=0.0,
                      jacobian="exact"):
    """Velocity potential sum_j Gamma(lam, x - y_j) J_j w_j phi_j at
    interior/exterior points (P, 3) -> (P, 3) complex."""
    pos, ratio = assembler.deformed_nodes(delta, jacobian)
    points = _check_distance(points, pos, assembler.grid.hbar)
    phi = np.asarray(phi, dtype=complex).reshape(-1, 3)
    diff = points[:, None, :] - pos[None]
    gamma, _ = kn.stokeslet(param, diff)
    fac = assembler.grid.weights * ratio
    return np.einsum("pqij,q,qj->pi", gamma, fac, phi)


def eval_pressure_potential(assembler, phi, points, delta=0.0,
                            jacobian="exact"):
    """Pressure potential sum_j P(x - y_j) . phi_j J_j w_j -> (P,)."""
    pos, ratio = assembler.deformed_nodes(delta, jacobian)
    points = _check_distance(points, pos, assembler.grid.hbar)
    phi = np.asarray(phi, dtype=complex).reshape(-1, 3)
    diff = points[:, None, :] - pos[None]
    pker = kn.pressure_vector(diff)
    fac = assembler.grid.weights * ratio
    return np.einsum("pqi,q,qi->p", pker, fac, phi)


def boundary_trace_residual(operator, phi):
    """Max boundary-trace magnitude of the single-layer field produced
    by phi, read through the assembled on-boundary operator: the trace
    of S(lambda)phi at the nodes is exactly operator @ phi."""
    phi = np.asarray(phi, dtype=complex).ravel()
    res = (operator.matrix @ phi).reshape(-1, 3)
    return float(np.max(np.linalg.norm(res, axis=-1)))


# ---------------------------------------------------------------------------
# Binary audit dump


def write_operator(path, op):
    """32-byte header (magic, pad, uint64 N, lambda as two doubles), then
    row-major little-endian complex64 entries."""
    header = _MAGIC + b"\x00\x00" + struct.pack(
        "<Qdd", op.matrix.shape[0], op.lam.real, op.lam.imag)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(op.matrix.astype("<c8").tobytes(order="C"))


def read_operator(path):
    with open(path, "rb") as fh:
        header = fh.read(32)
        if header[:6] != _MAGIC:
            raise ValueError("not an operator dump")
        dim, lre, lim = struct.unpack("<Qdd", header[8:32])
        data = np.frombuffer(fh.read(), dtype="<c8").reshape(dim, dim)
    return DenseComplexOperator(data.astype(complex), complex(lre, lim), 0.0)
