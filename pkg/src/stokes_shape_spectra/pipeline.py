"""Experiment orchestration: scan -> solve -> perturb -> validate.

Each stage reads the shared RunConfig, reuses one assembler, and writes
its artifact into the output directory:

    scan.csv           lambda, sigma_min, N, delta
    eigens.json        located eigenvalues (one entry per delta)
    perturbation.json  shift series, probes with field corrections
    validation.json    oracle comparisons and slope fits with pass/fail
    manifest.json      config digest, schema version, artifact list

All JSON is written with sorted keys and fixed float formatting so that
two runs of the same configuration produce byte-identical payloads; the
manifest timestamp is the only intentionally non-reproducible field.
"""

import csv
import datetime
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig  # noqa: F401  (re-exported for callers)
from .errors import (SolverError, StokesSpectraError, ValidationError)
from .geometry import (PerturbationField, jacobian_det_paper,
                       surface_element_series)
from .kernels import SpectralParam, pressure_vector, static_stokeslet, stokeslet
from .oracles import bessel_zero, fit_order
from .operators import NystromAssembler
from .perturbation import (Contour, contour_shift, default_contour,
                           eigenfunction_correction, lambda_series)
from .quadrature import SurfaceGrid
from .solver import find_eigen, sigma_min_scan
from . import __version__

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, complex) or isinstance(obj, np.complexfloating):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def write_json(path, payload):
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


class Pipeline:
    """Runs the configured stages against one shared assembler."""

    def __init__(self, config, out_dir=None, workers=None):
        self.config = config
        self.out = out_dir or config["output", "directory"]
        os.makedirs(self.out, exist_ok=True)
        self.workers = workers or config["run", "workers"] or os.cpu_count()
        self.seed = config["run", "seed"]
        self.phase_rate = config["kernel", "phase_rate"]
        self.jacobian = config["operators", "jacobian"]
        self._assembler = None
        self.artifacts = []
        self.checks = []

    # -- shared state -----------------------------------------------------

    @property
    def assembler(self):
        if self._assembler is None:
            grid = SurfaceGrid(self.config.surface(), self.config.n_theta)
            field = PerturbationField(self.config.surface(),
                                      self.config.rho())
            self._assembler = NystromAssembler(
                grid, field,
                patch_factor=self.config["operators", "patch_factor"])
        return self._assembler

    def _check(self, name, value, passed, detail=""):
        self.checks.append({"name": name, "value": _jsonable(value),
                            "passed": bool(passed), "detail": detail})
        return passed

    def _path(self, name):
        path = os.path.join(self.out, name)
        if name not in self.artifacts:
            self.artifacts.append(name)
        return path

    # -- stages -----------------------------------------------------------

    def stage_validate_kernels(self):
        """Geometry and kernel property checks (3x3 algebra only)."""
        rng = np.random.default_rng(self.seed)
        # pressure companion at the unit x-axis point
        p = pressure_vector(np.array([1.0, 0.0, 0.0]))
        self._check("pressure_unit_x", p.tolist(),
                    np.allclose(p, [1.0 / (4.0 * np.pi), 0.0, 0.0]),
                    "P((1,0,0)) = (1/4pi, 0, 0)")
        # evenness and symmetry of the velocity kernel
        lam = SpectralParam(5.0, self.phase_rate)
        r = rng.standard_normal(3)
        g_plus, g_minus = stokeslet(lam, r)[0], stokeslet(lam, -r)[0]
        self._check("kernel_even", float(np.abs(g_plus - g_minus).max()),
                    np.abs(g_plus - g_minus).max() < 1e-14)
        self._check("kernel_symmetric",
                    float(np.abs(g_plus - g_plus.T).max()),
                    np.abs(g_plus - g_plus.T).max() < 1e-14)
        # static limit of the real part
        g_small = stokeslet(SpectralParam(1e-6, self.phase_rate), r)[0]
        g_stat = static_stokeslet(r)
        err = np.abs(g_small.real - g_stat).max() / np.abs(g_stat).max()
        self._check("static_limit_real", float(err), err < 1e-4)
        # PDE residual by finite differences at random points and lambdas
        res, div = _pde_residual(self.phase_rate, rng, n_pts=4, n_lam=3)
        self._check("pde_residual", float(res), res <= 1e-5)
        self._check("divergence_free", float(div), div <= 1e-5)
        # geometric polynomial identities
        m = rng.standard_normal((3, 3))
        dets = [abs(jacobian_det_paper(m, d) - np.linalg.det(np.eye(3) + d * m))
                for d in (0.01, 0.1, 0.5)]
        self._check("jacobian_det_identity", float(max(dets)),
                    max(dets) < 1e-12)
        sig = surface_element_series(m)
        val = sum(s * 0.3 ** n for n, s in enumerate(sig))
        ref = np.linalg.det(np.eye(3) + 0.3 * m)
        self._check("sigma_series_identity", float(abs(val - ref)),
                    abs(val - ref) < 1e-12)
        sphere_sig = surface_element_series(np.eye(3))
        self._check("sphere_sigma_1331", list(map(float, sphere_sig)),
                    np.allclose(sphere_sig, [1.0, 3.0, 3.0, 1.0]))
        return all(c["passed"] for c in self.checks)

    def stage_scan(self):
        lo = self.config["scan", "lambda_min"]
        hi = self.config["scan", "lambda_max"]
        step = self.config["scan", "step"]
        grid = np.arange(lo, hi + 0.5 * step, step)
        asm = self.assembler
        asm._pack(0.0, self.jacobian)  # warm the geometry pack once

        def one(lam):
            return sigma_min_scan(asm, [lam], 0.0, self.phase_rate,
                                  self.jacobian)[0]

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            rows = list(pool.map(one, grid))
        path = self._path("scan.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "sigma_min", "N", "delta"])
            for lam, smin in rows:
                writer.writerow([f"{lam:.12g}", f"{smin:.12g}",
                                 asm.grid.N, "0"])
        return rows

    def stage_solve(self):
        bracket = (self.config["solve", "bracket_lo"],
                   self.config["solve", "bracket_hi"])
        refine = self.config["solve", "refine"]
        deltas = [0.0] + [d for d in self.config["perturbation", "deltas"]
                          if d > 0]
        entries = []
        self.results = {}
        for i, delta in enumerate(deltas):
            self.assembler.check_delta(delta)
            res = find_eigen(self.assembler, bracket, delta=delta,
                             phase_rate=self.phase_rate,
                             jacobian=self.jacobian, refine=refine,
                             seed=self.seed)
            phi_name = f"phi_{i:03d}.csv"
            _write_phi(self._path(phi_name), res.phi)
            entries.append({"lambda": res.lambda_star,
                            "sigma_min": res.sigma_min,
                            "multiplicity": res.multiplicity,
                            "N": res.n_nodes, "delta": delta,
                            "phi_file": phi_name})
            self.results[delta] = res
        write_json(self._path("eigens.json"),
                   {"schema_version": SCHEMA_VERSION, "eigenvalues": entries})
        return entries

    def stage_perturb(self):
        if not getattr(self, "results", None):
            self.stage_solve()
        res0 = self.results[0.0]
        center = self.config["contour", "center"] or res0.lambda_star
        radius = self.config["contour", "radius"] or None
        contour = (Contour(center, radius, self.config["contour", "points"])
                   if radius else
                   default_contour(center, gap=0.04 * center,
                                   n_points=self.config["contour", "points"]))
        series = lambda_series(self.assembler, res0, contour=contour,
                               phase_rate=self.phase_rate,
                               jacobian=self.jacobian)
        probes = _sample_probes(self.assembler, self.seed,
                                self.config["perturbation", "probes"])
        v0, v1, p0, p1 = eigenfunction_correction(
            self.assembler, res0, probes, contour=contour,
            phase_rate=self.phase_rate, jacobian=self.jacobian,
            seed=self.seed)
        slopes = self._series_slopes(series, contour)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "lambda0": series.lambda0, "lambda1": series.lambda1,
            "lambda2": series.lambda2,
            "multiplicity": series.multiplicity,
            "contour": {"center": contour.center, "radius": contour.radius,
                        "points": contour.n_points},
            "slopes": slopes,
            "probes": [{"x": probes[i], "v0": v0[i], "v1": v1[i],
                        "p0": p0[i], "p1": p1[i]}
                       for i in range(len(probes))],
        }
        write_json(self._path("perturbation.json"), payload)
        self.series = series
        return payload

    def _series_slopes(self, series, contour):
        """Residual orders of the order-1 and order-2 shift predictions
        against direct cluster means at the configured deltas."""
        deltas = [d for d in self.config["perturbation", "deltas"] if d > 0]
        if len(deltas) < 3:
            return {"order1": None, "order2": None}
        r1, r2 = [], []
        for d in sorted(deltas):
            self.assembler.check_delta(d)
            shift, m = contour_shift(self.assembler, contour, d,
                                     self.phase_rate, self.jacobian)
            mean = shift.real / m
            r1.append(abs(mean - series.lambda1 * d))
            r2.append(abs(mean - series.lambda1 * d
                          - series.lambda2 * d * d))
        out = {}
        for name, resid in (("order1", r1), ("order2", r2)):
            try:
                fit = fit_order(sorted(deltas), resid)
                out[name] = {"slope": fit.slope,
                             "correlation": fit.correlation}
            except StokesSpectraError:
                out[name] = {"slope": float("inf"), "correlation": 1.0}
        return out

    def stage_validate(self):
        """Cross-stage oracle comparisons appended to the check list."""
        if getattr(self, "results", None):
            res0 = self.results[0.0]
            # nearest toroidal ball eigenvalue, reported for the sphere only
            if self.config["surface", "kind"] == "sphere":
                target = min((bessel_zero(n, s) ** 2
                              for n in (1, 2, 3) for s in (1, 2)),
                             key=lambda v: abs(v - res0.lambda_star))
                rel = abs(res0.lambda_star - target) / target
                self._check("ball_eigenvalue_vs_bessel", float(rel),
                            rel < 5e-3,
                            f"nearest toroidal value {target:.6f}")
            # dilation covariance for constant rho
            if self.config["rho", "kind"] == "constant":
                amp = self.config["rho", "amplitude"]
                consts = [self.results[d].lambda_star * (1 + amp * d) ** 2
                          for d in self.results]
                spread = (max(consts) - min(consts)) / res0.lambda_star
                self._check("dilation_covariance", float(spread),
                            spread < 1e-3)
        if getattr(self, "series", None) is not None:
            s = self.series
            if self.config["rho", "kind"] == "constant":
                amp = self.config["rho", "amplitude"]
                q1 = s.lambda1 / (s.lambda0 * amp)
                q2 = s.lambda2 / (s.lambda0 * amp * amp)
                self._check("dilation_lambda1_ratio", float(q1),
                            abs(q1 + 2.0) < 0.02, "expect -2")
                self._check("dilation_lambda2_ratio", float(q2),
                            abs(q2 - 3.0) < 0.15, "expect +3")
        write_json(self._path("validation.json"),
                   {"schema_version": SCHEMA_VERSION, "checks": self.checks,
                    "passed": all(c["passed"] for c in self.checks)})
        return all(c["passed"] for c in self.checks)

    def write_manifest(self):
        payload = {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "config_digest": self.config.digest(),
            "config_source": os.path.basename(self.config.source_path or ""),
            "artifacts": sorted(self.artifacts),
            "timestamp": datetime.datetime.now(
                datetime.timezone.utc).isoformat(),
        }
        write_json(os.path.join(self.out, "manifest.json"), payload)


def _write_phi(path, phi):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im"])
        for z in phi:
            writer.writerow([f"{z.real:.17g}", f"{z.imag:.17g}"])


def _sample_probes(assembler, seed, count):
    """Deterministic interior probe points, kept away from the boundary."""
    rng = np.random.default_rng(seed)
    surface = assembler.grid.surface
    margin = 2.5 * assembler.grid.hbar
    probes = []
    while len(probes) < count:
        x = rng.uniform(-0.6, 0.6, size=3)
        if surface.contains(x[None, :], margin=margin)[0]:
            probes.append(x)
    return np.array(probes)


def _pde_residual(phase_rate, rng, n_pts=4, n_lam=3, h=1e-3):
    """Max relative FD residual of the momentum equation and divergence
    over random points and spectral parameters."""
    worst_res, worst_div = 0.0, 0.0
    offsets = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    for _ in range(n_lam):
        lam = float(rng.uniform(1.0, 50.0))
        param = SpectralParam(lam, phase_rate)
        for _ in range(n_pts):
            x = rng.uniform(0.4, 1.2, 3) * rng.choice([-1.0, 1.0], 3)
            g0 = stokeslet(param, x)[0]
            scale = np.abs(g0).max()
            lap = np.zeros((3, 3), dtype=complex)
            divg = np.zeros(3, dtype=complex)
            gradp = np.zeros((3, 3))
            for ax in range(3):
                e = h * offsets[ax]
                gp, gm = stokeslet(param, x + e)[0], stokeslet(param, x - e)[0]
                lap += (gp + gm - 2.0 * g0) / h ** 2
                divg += (gp[ax, :] - gm[ax, :]) / (2.0 * h)
                gradp[ax, :] = (pressure_vector(x + e)
                                - pressure_vector(x - e)) / (2.0 * h)
            res = np.abs(-lap + gradp - lam * g0).max() / (lam * scale)
            worst_res = max(worst_res, float(res))
            worst_div = max(worst_div, float(np.abs(divg).max() / scale))
    return worst_res, worst_div


STAGES = ("validate-kernels", "scan", "solve", "perturb", "full")


def run_pipeline(config, stage="full", out_dir=None, workers=None):
    """Execute one stage (or the whole chain) and return the exit code:
    0 success, 3 solver failure, 4 validation failure.  Config errors
    (exit 2) are raised before this point."""
    pipe = Pipeline(config, out_dir=out_dir, workers=workers)
    try:
        if stage in ("validate-kernels", "full"):
            pipe.stage_validate_kernels()
        if stage in ("scan", "full"):
            pipe.stage_scan()
        if stage in ("solve", "perturb", "full"):
            pipe.stage_solve()
        if stage in ("perturb", "full"):
            pipe.stage_perturb()
        ok = pipe.stage_validate()
        pipe.write_manifest()
    except (SolverError, StokesSpectraError) as exc:
        pipe._check("pipeline_error", str(exc), False)
        try:
            pipe.stage_validate()
            pipe.write_manifest()
        except Exception:
            pass
        if isinstance(exc, ValidationError):
            return 4
        return 3
    return 0 if ok else 4
