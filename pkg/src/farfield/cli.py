"""Batch front end: solve / plant-and-recover / convergence / verify / report.

Each command reads one experiment config (see :mod:`farfield.config`),
runs the owning modules, and emits RFC-4180-style CSV artifacts into the
configured output directory (rooted at $FARFIELD_OUT when set).  Reruns
with the same config and seed produce byte-identical CSVs; wall-clock
timings go to the console only.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import fit_expansion, kelvin_fn, kelvin_identity_gap
from .config import ConfigError, ExperimentConfig, parse_config_file
from .csvio import (
    SCHEMA_ORDERS,
    SCHEMA_RECOVERY,
    SCHEMA_REPORT,
    SCHEMA_VERIFY,
    format_float,
    read_rows,
    write_rows,
)
from .discretization import AnnulusGrid, Field
from .exact_solutions import planted_residual_check
from .linearization import coeff_decay_rate, linearized_coeffs, subsolution_certificate, CoefficientField
from .operators import BellmanMaxOp, EllipticityViolation, SymMatrix, ellipticity_probe
from .rates import richardson_orders
from .solver import SolveError, newton_solve, policy_iteration, solve_dirichlet

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _out_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    root = Path(os.environ.get("FARFIELD_OUT", "."))
    out = Path(override) if override else root / cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_solve(cfg: ExperimentConfig, grid: AnnulusGrid | None = None):
    grid = grid or AnnulusGrid(**cfg.grid_params())
    if cfg.method == "policy":
        return grid, *policy_iteration(
            cfg.operator, grid, cfg.boundary_fn, tol=cfg.tol, max_iter=cfg.max_iter
        )
    if cfg.method == "newton":
        return grid, *newton_solve(
            cfg.operator,
            grid,
            cfg.boundary_fn,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            damping=cfg.damping,
        )
    return grid, *solve_dirichlet(
        cfg.operator,
        grid,
        cfg.boundary_fn,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        method=cfg.method,
    )


def _write_solve_report(path, report):
    rows = [
        [str(i + 1), format_float(r)] for i, r in enumerate(report.residual_history)
    ]
    write_rows(path, ["iteration", "max_residual"], rows, SCHEMA_REPORT)


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    try:
        grid, u, report = run_solve(cfg)
    except SolveError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    u.write_csv(out / "field.csv")
    _write_solve_report(out / "solve_report.csv", report)
    print(
        f"solved {grid!r}: method={report.method} iterations={report.iterations} "
        f"final_residual={report.final_residual:.3e} wall_time={report.wall_time:.2f}s"
    )
    print(f"artifacts: {out / 'field.csv'}, {out / 'solve_report.csv'}")
    return EXIT_OK


def _recovery_rows(cfg: ExperimentConfig, fit):
    p = cfg.planted
    tol = cfg.fit_tolerance

    def rel(err, true):
        return err / abs(true) if abs(true) > 0 else err

    entries = []
    quad_err = float(
        np.linalg.norm(fit.quad.mat - p.quad.mat) / max(np.linalg.norm(p.quad.mat), 1e-300)
    )
    entries.append(("quad", float(np.linalg.norm(p.quad.mat)), float(np.linalg.norm(fit.quad.mat)), quad_err))
    lin_err = float(np.linalg.norm(fit.linear - p.linear))
    entries.append(
        ("linear", float(np.linalg.norm(p.linear)), float(np.linalg.norm(fit.linear)), rel(lin_err, float(np.linalg.norm(p.linear))))
    )
    entries.append(("const", p.const, fit.const, rel(abs(fit.const - p.const), p.const)))
    entries.append(
        ("gamma_coeff", p.gamma_coeff, fit.gamma_coeff, rel(abs(fit.gamma_coeff - p.gamma_coeff), p.gamma_coeff))
    )
    dip_err = float(np.linalg.norm(fit.dipole - p.dipole))
    entries.append(
        ("dipole", float(np.linalg.norm(p.dipole)), float(np.linalg.norm(fit.dipole)), rel(dip_err, float(np.linalg.norm(p.dipole))))
    )
    rows = []
    all_pass = True
    for name, true, fitted, err in entries:
        ok = err <= tol
        all_pass &= ok
        rows.append(
            [name, format_float(true), format_float(fitted), format_float(err), format_float(tol), "pass" if ok else "fail"]
        )
    return rows, all_pass


def cmd_plant_and_recover(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.planted is None:
        print("plant-and-recover needs boundary.kind = planted", file=sys.stderr)
        return EXIT_CONFIG
    if not cfg.shells:
        print("plant-and-recover needs fit.shells", file=sys.stderr)
        return EXIT_CONFIG
    try:
        grid, u, report = run_solve(cfg)
        fit = fit_expansion(cfg.operator, u, cfg.shells, include_tail=cfg.include_tail)
    except SolveError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    u.write_csv(out / "field.csv")
    _write_solve_report(out / "solve_report.csv", report)
    fit.write_csv(out / "fit.csv")
    fit.write_shells_csv(out / "fit_shells.csv")
    rows, all_pass = _recovery_rows(cfg, fit)
    write_rows(
        out / "recovery.csv",
        ["coefficient", "planted", "fitted", "rel_error", "tolerance", "status"],
        rows,
        SCHEMA_RECOVERY,
    )
    if cfg.svg:
        from .svgplot import svg_loglog

        svg_loglog(
            out / "decay.svg",
            {"fit residual": (fit.shell_radii, fit.shell_residual_max)},
            title="shell residual decay",
            xlabel="shell radius",
            ylabel="max residual",
        )
    for row in rows:
        print(f"  {row[0]:>12}: planted={row[1]} fitted={row[2]} rel_err={row[3]} [{row[5]}]")
    print(f"artifacts in {out}")
    return EXIT_OK if all_pass else EXIT_FAIL


def cmd_convergence(cfg: ExperimentConfig, out: Path, levels: int) -> int:
    if levels < 3:
        print("convergence needs levels >= 3", file=sys.stderr)
        return EXIT_CONFIG
    oracle = cfg.planted.values if cfg.planted is not None else cfg.boundary_fn
    rows = []
    errors = []
    status = EXIT_OK
    for k in range(levels):
        h = cfg.h / 2**k
        try:
            grid, u, _ = run_solve(cfg, AnnulusGrid(**cfg.grid_params(h)))
        except (SolveError, ValueError) as exc:
            rows.append([str(k), format_float(h), "", "", "failed"])
            print(f"level {k} (h={h}) failed: {exc}", file=sys.stderr)
            status = EXIT_FAIL
            break
        exact = Field.from_function(grid, oracle)
        err = float(np.abs(u.values - exact.values)[grid.interior_ids].max())
        errors.append(err)
        rows.append([str(k), format_float(h), format_float(err), "", ""])
    orders = richardson_orders(errors)
    for k, o in enumerate(orders):
        rows[k + 1][3] = format_float(o)
    for row in rows:
        if row[2] and float(row[2]) <= 1e-8:
            row[4] = "exact"
    write_rows(
        out / "orders.csv",
        ["level", "h", "max_error", "order", "flag"],
        rows,
        SCHEMA_ORDERS,
    )
    for row in rows:
        print(f"  level {row[0]}: h={row[1]} max_error={row[2]} order={row[3]} {row[4]}")
    print(f"artifacts: {out / 'orders.csv'}")
    return status


def _verify_checks(cfg: ExperimentConfig):
    checks = []
    op = cfg.operator
    lam, Lam = op.band

    try:
        lo, hi = ellipticity_probe(op, trials=200, seed=cfg.seed, dim=cfg.dim)
        ok = (lam - 1e-9 <= lo) and (hi <= Lam + 1e-9)
        checks.append(("ellipticity_probe", f"lo={lo:.6g} hi={hi:.6g}", hi - lo, Lam - lam + 2e-9, ok))
    except EllipticityViolation as exc:
        checks.append(("ellipticity_probe", str(exc), float("nan"), 0.0, False))

    # inversion identity refinement on a smooth quartic
    quartic = lambda pts: (np.atleast_2d(pts) ** 2).sum(axis=1) ** 2
    if cfg.dim == 2:
        samples = np.array([[0.7, 0.2], [0.6, -0.5], [0.9, 0.3]])
    else:
        samples = np.array([[0.6, 0.2, 0.1], [0.9, -0.3, 0.2], [0.5, 0.5, 0.4]])
    gaps = [kelvin_identity_gap(quartic, samples, s, cfg.dim) for s in (0.02, 0.01, 0.005)]
    orders = richardson_orders(gaps)
    ok = min(orders) >= 1.8
    checks.append(("kelvin_identity_order", f"gaps={['%.2e' % g for g in gaps]}", min(orders), 1.8, ok))
    K2 = kelvin_fn(kelvin_fn(quartic, cfg.dim), cfg.dim)
    inv_gap = float(np.abs(K2(samples) - quartic(samples)).max())
    checks.append(("kelvin_involution", "K[K[E]] vs E", inv_gap, 1e-12, inv_gap <= 1e-12))

    # plane-case certificate on the synthetic isotropic perturbation
    eps0 = 0.4
    a_fn = lambda x: (1.0 + eps0 / float(np.linalg.norm(x))) * np.eye(2)
    shells = [1.0 + 0.5 * k for k in range(11)]
    cert_ok = True
    details = []
    for alpha in (0.25, 0.5, 0.75):
        r_star = eps0 * (3.0 - alpha) / alpha
        cert = subsolution_certificate(a_fn, alpha, shells)
        gap = abs(cert.radius - r_star)
        cert_ok &= gap <= 0.5 + 1e-12
        details.append(f"alpha={alpha}: R={cert.radius} r*={r_star:.3g}")
    checks.append(("subsolution_certificate", "; ".join(details), 0.0, 0.5, cert_ok))

    # synthetic coefficient decay at rate -2
    grid = AnnulusGrid(2, 1.0, 12.0, 0.125)
    v = np.array([0.8, 0.6])
    pts = grid.coords[grid.interior_ids]
    r2 = (pts**2).sum(axis=1)
    vals = np.tile(np.eye(2), (pts.shape[0], 1, 1)) + np.einsum(
        "n,ij->nij", 1.0 / r2, np.outer(v, v)
    )
    cf = CoefficientField(grid, vals, SymMatrix.identity(2))
    decay = coeff_decay_rate(cf, [2.0, 3.0, 4.5, 6.5, 9.5])
    ok = decay.exponent is not None and abs(decay.exponent + 2.0) <= 0.05
    checks.append(
        ("coefficient_decay_synthetic", f"slope={decay.exponent}", decay.exponent or float("nan"), -2.0, ok)
    )

    if cfg.planted is not None:
        rng = np.random.default_rng(cfg.seed)
        dirs = rng.normal(size=(5, cfg.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = dirs * np.linspace(0.45 * cfg.r_out, 0.8 * cfg.r_out, 5)[:, None]
        res = [planted_residual_check(cfg.planted, pts, s) for s in (0.08, 0.04, 0.02)]
        orders = richardson_orders(res)
        ok = min(orders) >= 1.8
        checks.append(
            ("planted_residual_order", f"residuals={['%.2e' % r for r in res]}", min(orders), 1.8, ok)
        )

    if isinstance(op, BellmanMaxOp) and cfg.shells:
        try:
            grid, u, _ = run_solve(cfg)
            from .asymptotics import estimate_far_hessian

            quad = estimate_far_hessian(u, cfg.shells)
            cfld = linearized_coeffs(op, u, quad, check_tol=max(10 * grid.h**2, 1e-6))
            spec = cfld.spectra()
            in_band = bool(spec.min() >= lam - 1e-8 and spec.max() <= Lam + 1e-8)
            decay = coeff_decay_rate(cfld, cfg.shells[: max(3, len(cfg.shells))])
            finite = decay.exponent is None or np.isfinite(decay.exponent)
            checks.append(
                (
                    "bellman_coefficients",
                    f"spectrum=[{spec.min():.4g},{spec.max():.4g}] slope={decay.exponent}",
                    spec.min(),
                    lam,
                    in_band and finite,
                )
            )
        except SolveError as exc:
            checks.append(("bellman_coefficients", str(exc), float("nan"), 0.0, False))
    return checks


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    checks = _verify_checks(cfg)
    rows = []
    all_ok = True
    for name, detail, value, threshold, ok in checks:
        all_ok &= ok
        rows.append(
            [name, detail, format_float(value) if value == value else "", format_float(threshold), "pass" if ok else "fail"]
        )
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    write_rows(
        out / "verify.csv",
        ["check", "detail", "value", "threshold", "status"],
        rows,
        SCHEMA_VERIFY,
    )
    print(f"artifacts: {out / 'verify.csv'}")
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_report(run_dir: Path, svg: bool) -> int:
    run_dir = Path(run_dir)
    found = False
    for name in ("recovery.csv", "verify.csv", "orders.csv", "fit.csv"):
        path = run_dir / name
        if not path.exists():
            continue
        found = True
        cols, schema, rows = read_rows(path)
        print(f"{name} [{schema}]")
        print("  " + " | ".join(cols))
        for row in rows:
            print("  " + " | ".join(row))
    report = run_dir / "solve_report.csv"
    if report.exists():
        found = True
        _, _, rows = read_rows(report)
        if rows:
            print(f"solve_report.csv: {len(rows)} iterations, final residual {rows[-1][1]}")
    shells = run_dir / "fit_shells.csv"
    if shells.exists() and svg:
        _, _, rows = read_rows(shells)
        xs = [float(r[0]) for r in rows]
        ys = [float(r[1]) for r in rows]
        from .svgplot import svg_loglog

        svg_loglog(
            run_dir / "decay.svg",
            {"fit residual": (xs, ys)},
            title="shell residual decay",
            xlabel="shell radius",
            ylabel="max residual",
        )
        print(f"wrote {run_dir / 'decay.svg'}")
    if not found:
        print(f"no artifacts found under {run_dir}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="farfield",
        description="Far-field expansion laboratory for F(D^2 u) = 0 on exterior domains",
    )
    parser.add_argument("--version", action="version", version=f"farfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config file")
        p.add_argument("--set", dest="overrides", action="append", metavar="SEC.KEY=VAL")
        p.add_argument("--out", help="output directory (overrides config and $FARFIELD_OUT)")
        p.add_argument("--svg", action="store_true", help="emit SVG decay plots")
        return p

    add_config_cmd("solve", "solve the configured Dirichlet problem")
    add_config_cmd("plant-and-recover", "solve planted data and score coefficient recovery")
    conv = add_config_cmd("convergence", "order study across h-halved grid levels")
    conv.add_argument("--levels", type=int, default=3)
    add_config_cmd("verify", "consolidated property checks")
    rep = sub.add_parser("report", help="summarize an output directory")
    rep.add_argument("run_dir")
    rep.add_argument("--svg", action="store_true")

    args = parser.parse_args(argv)
    if args.command == "report":
        return cmd_report(Path(args.run_dir), args.svg)

    try:
        cfg = parse_config_file(args.config, _parse_overrides(args.overrides))
        if args.svg:
            cfg.svg = True
        out = _out_dir(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "plant-and-recover":
            return cmd_plant_and_recover(cfg, out)
        if args.command == "convergence":
            return cmd_convergence(cfg, out, args.levels)
        if args.command == "verify":
            return cmd_verify(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
