"""End-to-end command-line runs on a small sphere configuration."""

import csv
import json
import os

import pytest

from stokes_shape_spectra.cli import main
from stokes_shape_spectra.config import parse_config
from stokes_shape_spectra.errors import ConfigError


TINY = """\
[surface]
kind = sphere

[rho]
kind = constant
amplitude = 1.0

[mesh]
nodes = 128

[scan]
lambda_min = 19.0
lambda_max = 21.0
step = 1.0

[solve]
bracket_lo = 19.0
bracket_hi = 22.0

[perturbation]
deltas = 0.01
probes = 2

[contour]
points = 8

[run]
seed = 7
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_config_defaults_and_digest():
    cfg = parse_config(TINY)
    assert cfg["mesh", "nodes"] == 128
    assert cfg.n_theta == 8
    assert cfg["kernel", "phase_rate"] == "sqrt"  # defaulted
    assert cfg.digest() == parse_config(TINY).digest()
    assert cfg.digest() != parse_config(TINY.replace("7", "8")).digest()


@pytest.mark.parametrize("mutation, fragment", [
    ("[mesh]\nnodes = -4", "positive"),
    ("[mesh]\nspacing = 3", "unknown key"),
    ("[weird]\nx = 1", "unknown section"),
    ("[mesh]\nnodes = many", "integer"),
    ("[kernel]\nphase_rate = cubic", "one of"),
])
def test_config_errors_are_line_anchored(mutation, fragment):
    text = TINY + "\n" + mutation
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert fragment in str(err.value)
    if "positive" not in fragment:  # range checks run after parsing
        lineno = len(text.splitlines())
        if "section" in fragment:  # rejected at the header line itself
            lineno -= 1
        assert f"line {lineno}" in str(err.value)


def test_cli_exit_2_on_bad_config(tmp_path, capsys):
    cfg = _write(tmp_path, TINY + "\n[mesh]\nspacing = 3")
    code = main(["validate-kernels", "--config", cfg,
                 "--out", str(tmp_path / "out")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_exit_2_on_missing_file(tmp_path, capsys):
    code = main(["scan", "--config", str(tmp_path / "nope.cfg")])
    assert code == 2


def test_validate_kernels_stage(tmp_path):
    cfg = _write(tmp_path, TINY)
    out = tmp_path / "out"
    assert main(["validate-kernels", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads((out / "validation.json").read_text())
    assert payload["schema_version"] == 1
    assert payload["passed"] is True
    names = {c["name"] for c in payload["checks"]}
    assert {"pressure_unit_x", "pde_residual", "divergence_free",
            "jacobian_det_identity"} <= names
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_digest"] == parse_config(TINY).digest()
    assert "validation.json" in manifest["artifacts"]


def test_scan_stage_artifact(tmp_path):
    cfg = _write(tmp_path, TINY)
    out = tmp_path / "out"
    assert main(["scan", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "scan.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["lambda", "sigma_min", "N", "delta"]
    assert len(rows) == 1 + 3  # 19, 20, 21
    lam = [float(r[0]) for r in rows[1:]]
    assert lam == [19.0, 20.0, 21.0]
    assert all(int(r[2]) == 128 for r in rows[1:])


@pytest.mark.slow
def test_full_run_and_artifacts(tmp_path):
    cfg = _write(tmp_path, TINY)
    out = tmp_path / "out"
    assert main(["full", "--config", cfg, "--out", str(out)]) == 0

    eig = json.loads((out / "eigens.json").read_text())
    entries = eig["eigenvalues"]
    assert [e["delta"] for e in entries] == [0.0, 0.01]
    for e in entries:
        assert e["N"] == 128 and e["multiplicity"] == 3
        assert 19.0 < e["lambda"] < 22.0
        assert os.path.exists(out / e["phi_file"])
    # dilation: lambda scales by (1+delta)^-2
    ratio = entries[1]["lambda"] / entries[0]["lambda"]
    assert abs(ratio - 1.01 ** -2) < 1e-6

    pert = json.loads((out / "perturbation.json").read_text())
    assert abs(pert["lambda1"] / pert["lambda0"] + 2.0) < 0.02
    assert abs(pert["lambda2"] / pert["lambda0"] - 3.0) < 0.15
    assert pert["multiplicity"] == 3
    assert set(pert["contour"]) == {"center", "radius", "points"}
    assert len(pert["probes"]) == 2
    for probe in pert["probes"]:
        assert set(probe) == {"x", "v0", "v1", "p0", "p1"}
        assert len(probe["x"]) == 3 and len(probe["v1"]) == 3

    val = json.loads((out / "validation.json").read_text())
    assert val["passed"] is True

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema_version"] == 1
    assert {"scan.csv", "eigens.json", "perturbation.json",
            "validation.json"} <= set(manifest["artifacts"])


@pytest.mark.slow
def test_full_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, TINY)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["full", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["full", "--config", cfg, "--out", str(out_b)]) == 0
    names = sorted(os.listdir(out_a))
    assert names == sorted(os.listdir(out_b))
    for name in names:
        bytes_a = (out_a / name).read_bytes()
        bytes_b = (out_b / name).read_bytes()
        if name == "manifest.json":
            pa = json.loads(bytes_a)
            pb = json.loads(bytes_b)
            pa.pop("timestamp"), pb.pop("timestamp")
            assert pa == pb
        else:
            assert bytes_a == bytes_b, f"{name} differs between runs"
