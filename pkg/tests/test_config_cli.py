import os
from pathlib import Path

import numpy as np
import pytest

import farfield as ff
from farfield.cli import main
from farfield.config import ConfigError, parse_config

PLANTED_CFG = """
[operator]
kind = linear
matrix = 1.3 0.3; 0.3 0.8
lam = 0.5
Lam = 2.0

[grid]
dim = 2
r_in = 1.0
r_out = 8.0
h = 0.5

[boundary]
kind = planted
quad = 0.9 0.25; 0.25 -1.65
linear = 0.4 -0.3
const = 1.2
gamma_coeff = 0.9
dipole = 0.5 -0.35

[solver]
method = auto
tol = 1e-10

[fit]
shells = 2.5 3.0 3.5 4.0 4.5 5.0 5.5 6.0 6.5 7.0
tolerance = 0.02

[output]
dir = runs/test
seed = 42
"""

BELLMAN_CFG = """
[operator]
kind = bellman
members =
    1.41 0.24; 0.24 0.84 @ 0.0
    1.41 -0.24; -0.24 0.84 @ 0.0

[grid]
dim = 2
r_in = 1.0
r_out = 8.0
h = 0.25

[boundary]
kind = quadratic_radial
quad = 0.4 0.5; 0.5 -0.962
radial_coeff = 1.2

[solver]
method = policy
tol = 1e-8
max_iter = 30

[fit]
shells = 3.0 4.0 5.0 6.0 7.0

[output]
dir = runs/bellman
seed = 7
"""


def test_parse_planted_config():
    cfg = parse_config(PLANTED_CFG)
    assert isinstance(cfg.operator, ff.LinearOp)
    assert cfg.planted is not None
    assert cfg.dim == 2 and cfg.h == 0.5
    assert cfg.shells[0] == 2.5 and cfg.fit_tolerance == 0.02
    assert cfg.seed == 42


def test_parse_bellman_config():
    cfg = parse_config(BELLMAN_CFG)
    assert isinstance(cfg.operator, ff.BellmanMaxOp)
    assert len(cfg.operator.members) == 2
    assert cfg.method == "policy"
    # boundary callable is vectorized
    vals = cfg.boundary_fn(np.array([[2.0, 0.0], [0.0, 3.0]]))
    assert vals.shape == (2,)


def test_overrides_apply():
    cfg = parse_config(PLANTED_CFG, {"grid.h": "0.25", "output.seed": "9"})
    assert cfg.h == 0.25 and cfg.seed == 9


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(PLANTED_CFG, {"grid.wat": "3"})
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(PLANTED_CFG, {"plotting.dpi": "300"})


def test_malformed_line_reports_position():
    bad = PLANTED_CFG.replace("h = 0.5", "h 0.5")
    with pytest.raises(ConfigError, match="line"):
        parse_config(bad)


def test_missing_section_rejected():
    with pytest.raises(ConfigError, match="missing required section"):
        parse_config("[operator]\nkind = linear\nmatrix = 1 0; 0 1\n")


def test_shell_outside_domain_rejected():
    with pytest.raises(ConfigError, match="outside"):
        parse_config(PLANTED_CFG, {"fit.shells": "9.5"})


def test_planted_requires_linear_operator():
    with pytest.raises(ConfigError, match="linear operator"):
        parse_config(BELLMAN_CFG, {"boundary.kind": "planted", "boundary.quad": "1 0; 0 -1"})


def test_bad_vector_and_matrix_messages():
    with pytest.raises(ConfigError, match="boundary.quad"):
        parse_config(PLANTED_CFG, {"boundary.quad": "1 0; 0"})
    with pytest.raises(ConfigError, match="solver.tol"):
        parse_config(PLANTED_CFG, {"solver.tol": "fast"})


# ------------------------------------------------------------------- CLI

def write_cfg(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def test_cmd_solve_emits_artifacts(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    out = tmp_path / "out"
    assert main(["solve", cfg, "--out", str(out)]) == 0
    assert (out / "field.csv").exists() and (out / "solve_report.csv").exists()
    text = (out / "solve_report.csv").read_text().splitlines()
    assert text[0] == "iteration,max_residual,solve-report-v1"
    assert float(text[-1].split(",")[1]) <= 1e-10


def test_cmd_solve_malformed_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PLANTED_CFG.replace("h = 0.5", "h 0.5"))
    assert main(["solve", cfg]) == 2
    assert "config error" in capsys.readouterr().err


def test_cmd_plant_and_recover(tmp_path):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    out = tmp_path / "out"
    assert main(["plant-and-recover", cfg, "--out", str(out)]) == 0
    rows = (out / "recovery.csv").read_text().splitlines()
    assert rows[0].startswith("coefficient,planted,fitted,rel_error,tolerance,status")
    assert all(line.split(",")[5] == "pass" for line in rows[1:])
    assert (out / "fit.csv").exists() and (out / "fit_shells.csv").exists()


def test_cmd_plant_and_recover_zero_decay_terms(tmp_path):
    text = PLANTED_CFG.replace("gamma_coeff = 0.9", "gamma_coeff = 0.0").replace(
        "dipole = 0.5 -0.35", "dipole = 0.0 0.0"
    )
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "out"
    assert main(["plant-and-recover", cfg, "--out", str(out)]) == 0
    rows = {r.split(",")[0]: r.split(",") for r in (out / "recovery.csv").read_text().splitlines()[1:]}
    assert float(rows["gamma_coeff"][2]) <= 1e-8
    assert float(rows["dipole"][2]) <= 1e-8


def test_cmd_convergence_quadratic_exact_flags(tmp_path):
    text = PLANTED_CFG.replace("kind = planted", "kind = quadratic")
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "out"
    assert main(["convergence", cfg, "--out", str(out), "--levels", "3"]) == 0
    rows = (out / "orders.csv").read_text().splitlines()[1:]
    assert all(r.split(",")[4] == "exact" for r in rows)


def test_cmd_convergence_planted_orders(tmp_path):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    out = tmp_path / "out"
    assert main(["convergence", cfg, "--out", str(out), "--levels", "3"]) == 0
    rows = [r.split(",") for r in (out / "orders.csv").read_text().splitlines()[1:]]
    orders = [float(r[3]) for r in rows if r[3]]
    assert min(orders) >= 1.8


def test_cmd_convergence_needs_three_levels(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    assert main(["convergence", cfg, "--out", str(tmp_path / "o"), "--levels", "2"]) == 2


def test_cmd_verify_identity_operator(tmp_path):
    text = PLANTED_CFG.replace("matrix = 1.3 0.3; 0.3 0.8", "matrix = 1 0; 0 1").replace(
        "quad = 0.9 0.25; 0.25 -1.65", "quad = 1 0; 0 -1"
    )
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "out"
    assert main(["verify", cfg, "--out", str(out)]) == 0
    rows = (out / "verify.csv").read_text().splitlines()[1:]
    assert rows and all(r.split(",")[-2] == "pass" for r in rows)


def test_cmd_verify_bellman_finite_exponents(tmp_path):
    cfg = write_cfg(tmp_path, BELLMAN_CFG)
    out = tmp_path / "out"
    assert main(["verify", cfg, "--out", str(out)]) == 0
    text = (out / "verify.csv").read_text()
    assert "bellman_coefficients" in text


def test_cmd_report_and_svg(tmp_path, capsys):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    out = tmp_path / "out"
    assert main(["plant-and-recover", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", str(out), "--svg"]) == 0
    printed = capsys.readouterr().out
    assert "recovery.csv" in printed
    svg = out / "decay.svg"
    assert svg.exists()
    import xml.etree.ElementTree as ET

    ET.fromstring(svg.read_text())  # well-formed


def test_cmd_report_empty_dir(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1


def test_output_root_env(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    monkeypatch.setenv("FARFIELD_OUT", str(tmp_path / "root"))
    assert main(["solve", cfg]) == 0
    assert (tmp_path / "root" / "runs" / "test" / "field.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, PLANTED_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["plant-and-recover", cfg, "--out", str(out1)]) == 0
    assert main(["plant-and-recover", cfg, "--out", str(out2)]) == 0
    for name in ("field.csv", "solve_report.csv", "fit.csv", "fit_shells.csv", "recovery.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
