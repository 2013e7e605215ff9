"""Run configuration: flat sectioned key-value text files.

Format: `[section]` headers, `key = value` lines, `#` comments, blank
lines ignored.  Unknown sections or keys are hard errors with the line
number, as are type or range violations.  All randomness downstream
flows from the single seed recorded here.
"""

import hashlib
from dataclasses import dataclass, field as dc_field

from .errors import ConfigError
from .geometry import (BumpySphere, Ellipsoid, RHO_CATALOG, Sphere,
                       TrigBumpRho)


def _parse_float(raw, line):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", line) from None


def _parse_int(raw, line):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", line) from None


def _parse_float_list(raw, line):
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected numbers, got {raw!r}", line) from None


# section -> key -> (parser, default)
_SCHEMA = {
    "surface": {
        "kind": (str, "sphere"),
        "a": (_parse_float, 1.0),
        "b": (_parse_float, 1.0),
        "c": (_parse_float, 1.0),
        "epsilon": (_parse_float, 0.1),
    },
    "rho": {
        "kind": (str, "constant"),
        "amplitude": (_parse_float, 1.0),
        "theta0": (_parse_float, 1.0),
        "phi0": (_parse_float, 0.5),
        "width": (_parse_float, 0.6),
    },
    "mesh": {
        "nodes": (_parse_int, 300),
        "n_theta": (_parse_int, 0),       # 0 = derive from nodes
    },
    "scan": {
        "lambda_min": (_parse_float, 15.0),
        "lambda_max": (_parse_float, 25.0),
        "step": (_parse_float, 0.25),
    },
    "solve": {
        "bracket_lo": (_parse_float, 19.0),
        "bracket_hi": (_parse_float, 21.0),
        "refine": (str, "contour"),
    },
    "perturbation": {
        "deltas": (_parse_float_list, [0.01, 0.05, 0.1]),
        "probes": (_parse_int, 5),
    },
    "contour": {
        "center": (_parse_float, 0.0),    # 0 = use located eigenvalue
        "radius": (_parse_float, 0.0),    # 0 = default gap heuristic
        "points": (_parse_int, 32),
    },
    "kernel": {
        "phase_rate": (str, "sqrt"),
    },
    "operators": {
        "jacobian": (str, "exact"),
        "patch_factor": (_parse_float, 4.0),
    },
    "output": {
        "directory": (str, "out"),
    },
    "run": {
        "seed": (_parse_int, 7),
        "workers": (_parse_int, 0),       # 0 = machine cores
    },
}

_CHOICES = {
    ("surface", "kind"): ("sphere", "ellipsoid", "bumpy_sphere"),
    ("rho", "kind"): tuple(sorted(RHO_CATALOG)),
    ("kernel", "phase_rate"): ("sqrt", "literal"),
    ("operators", "jacobian"): ("exact", "paper"),
    ("solve", "refine"): ("contour", "golden"),
}


@dataclass
class RunConfig:
    """Validated, fully-defaulted configuration for one pipeline run."""

    values: dict
    source_path: str = ""
    overrides: dict = dc_field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key
        return self.values[section][name]

    @property
    def n_theta(self):
        n = self["mesh", "n_theta"]
        if n:
            return n
        # tensor grid has 2 * n_theta^2 nodes
        return max(4, round((self["mesh", "nodes"] / 2.0) ** 0.5))

    def surface(self):
        kind = self["surface", "kind"]
        if kind == "sphere":
            return Sphere()
        if kind == "ellipsoid":
            return Ellipsoid(self["surface", "a"], self["surface", "b"],
                             self["surface", "c"])
        return BumpySphere(self["surface", "epsilon"])

    def rho(self):
        kind = self["rho", "kind"]
        amp = self["rho", "amplitude"]
        if kind == "trig_bump":
            return TrigBumpRho(self["rho", "theta0"], self["rho", "phi0"],
                               self["rho", "width"], amplitude=amp)
        return RHO_CATALOG[kind](amplitude=amp)

    def canonical_text(self):
        lines = []
        for section in sorted(self.values):
            for name in sorted(self.values[section]):
                lines.append(f"{section}.{name}={self.values[section][name]!r}")
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def parse_config(text, source_path=""):
    values = {sec: {k: default for k, (_, default) in keys.items()}
              for sec, keys in _SCHEMA.items()}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, rawval = line.partition("=")
        key, rawval = key.strip(), rawval.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        parser = _SCHEMA[section][key][0]
        value = parser(rawval, lineno) if parser is not str else rawval
        choices = _CHOICES.get((section, key))
        if choices and value not in choices:
            raise ConfigError(
                f"{section}.{key} must be one of {choices}, got {value!r}",
                lineno)
        values[section][key] = value
    cfg = RunConfig(values=values, source_path=source_path)
    _validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", 0) from exc
    return parse_config(text, source_path=str(path))


def _validate(cfg):
    if cfg["mesh", "nodes"] <= 0:
        raise ConfigError("mesh.nodes must be positive", 0)
    if cfg["mesh", "n_theta"] < 0:
        raise ConfigError("mesh.n_theta must be nonnegative", 0)
    if cfg["scan", "step"] <= 0:
        raise ConfigError("scan.step must be positive", 0)
    if not (0 < cfg["scan", "lambda_min"] < cfg["scan", "lambda_max"]):
        raise ConfigError("scan range must satisfy 0 < min < max", 0)
    if not (0 < cfg["solve", "bracket_lo"] < cfg["solve", "bracket_hi"]):
        raise ConfigError("solve bracket must satisfy 0 < lo < hi", 0)
    if any(d < 0 for d in cfg["perturbation", "deltas"]):
        raise ConfigError("perturbation.deltas must be nonnegative", 0)
    for kind in ("a", "b", "c"):
        if cfg["surface", kind] <= 0:
            raise ConfigError(f"surface.{kind} must be positive", 0)
    if cfg["contour", "points"] < 8:
        raise ConfigError("contour.points must be at least 8", 0)
