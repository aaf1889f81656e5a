"""Experiment configuration: line-oriented key/value text with sections.

The format is INI-style (configparser underneath, interpolation off,
case-sensitive keys).  Matrices are written as rows separated by ';'
with whitespace-separated entries; vectors are whitespace-separated;
Bellman families put one "matrix @ offset" member per (continuation)
line.  Command-line ``--set section.key=value`` overrides file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exact_solutions import PlantedExpansion, pucci_radial_profile
from .operators import (
    BellmanMaxOp,
    EllipticOperator,
    LinearOp,
    PucciMinusOp,
    PucciPlusOp,
    SymMatrix,
    fundamental_values,
    metric_inverse,
)

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_file"]


class ConfigError(ValueError):
    pass


_ALLOWED_KEYS = {
    "operator": {"kind", "matrix", "members", "lam", "Lam"},
    "grid": {"dim", "r_in", "r_out", "h"},
    "boundary": {
        "kind",
        "quad",
        "linear",
        "const",
        "gamma_coeff",
        "dipole",
        "radial_coeff",
    },
    "solver": {"method", "tol", "max_iter", "damping"},
    "fit": {"shells", "tolerance", "include_tail"},
    "output": {"dir", "seed", "svg"},
}

_REQUIRED_SECTIONS = {"operator", "grid", "boundary"}


def _parse_vector(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse vector from {text!r}") from exc


def _parse_matrix(text: str, what: str) -> np.ndarray:
    rows = [r.strip() for r in text.split(";") if r.strip()]
    try:
        m = np.array([[float(v) for v in r.split()] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse matrix from {text!r}") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{what}: matrix must be square, got shape {m.shape}")
    return m


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``boundary_fn`` is a vectorized callable on (m, dim) point arrays;
    ``planted`` is set only for planted boundary data, enabling oracle
    comparisons downstream.
    """

    operator: EllipticOperator
    dim: int
    r_in: float
    r_out: float
    h: float
    boundary_kind: str
    boundary_fn: object
    planted: PlantedExpansion | None
    method: str = "auto"
    tol: float = 1e-8
    max_iter: int = 40
    damping: float = 1.0
    shells: list = field(default_factory=list)
    fit_tolerance: float = 0.02
    include_tail: bool = True
    out_dir: str = "runs/out"
    seed: int = 1234
    svg: bool = False

    def grid_params(self, h: float | None = None):
        return dict(dim=self.dim, r_in=self.r_in, r_out=self.r_out, h=self.h if h is None else h)


def _get(cp, sec: str, key: str, default=None, required: bool = False) -> str | None:
    if cp.has_option(sec, key):
        return cp.get(sec, key)
    if required:
        raise ConfigError(f"{sec}.{key}: required key missing")
    return default


def _get_float(cp, sec, key, default=None, required=False):
    raw = _get(cp, sec, key, None, required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{sec}.{key}: expected a number, got {raw!r}") from exc


def _build_operator(cp) -> EllipticOperator:
    kind = _get(cp, "operator", "kind", required=True).strip().lower()
    lam = _get_float(cp, "operator", "lam")
    Lam = _get_float(cp, "operator", "Lam")
    try:
        if kind == "linear":
            m = _parse_matrix(_get(cp, "operator", "matrix", required=True), "operator.matrix")
            return LinearOp(SymMatrix.from_matrix(m), lam, Lam)
        if kind == "bellman":
            raw = _get(cp, "operator", "members", required=True)
            members = []
            for line in raw.splitlines():
                line = line.strip()
                if not line:
                    continue
                if "@" not in line:
                    raise ConfigError(
                        f"operator.members: member {line!r} needs 'matrix @ offset'"
                    )
                mtx, off = line.rsplit("@", 1)
                members.append(
                    (
                        SymMatrix.from_matrix(_parse_matrix(mtx, "operator.members")),
                        float(off),
                    )
                )
            return BellmanMaxOp(members, lam, Lam)
        if kind in ("pucci+", "pucci_plus"):
            if lam is None or Lam is None:
                raise ConfigError("operator: pucci operators need lam and Lam")
            return PucciPlusOp(lam, Lam)
        if kind in ("pucci-", "pucci_minus"):
            if lam is None or Lam is None:
                raise ConfigError("operator: pucci operators need lam and Lam")
            return PucciMinusOp(lam, Lam)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"operator: {exc}") from exc
    raise ConfigError(f"operator.kind: unknown kind {kind!r}")


def _build_boundary(cp, op: EllipticOperator, dim: int):
    kind = _get(cp, "boundary", "kind", required=True).strip().lower()
    if kind == "planted":
        if not isinstance(op, LinearOp):
            raise ConfigError("boundary.kind planted requires a linear operator")
        quad = _parse_matrix(_get(cp, "boundary", "quad", required=True), "boundary.quad")
        linear = _parse_vector(_get(cp, "boundary", "linear", "0 " * dim), "boundary.linear")
        dipole = _parse_vector(_get(cp, "boundary", "dipole", "0 " * dim), "boundary.dipole")
        try:
            planted = PlantedExpansion(
                dim,
                op.mat,
                SymMatrix.from_matrix(quad),
                linear=linear,
                const=_get_float(cp, "boundary", "const", 0.0),
                gamma_coeff=_get_float(cp, "boundary", "gamma_coeff", 0.0),
                dipole=dipole,
            )
        except ValueError as exc:
            raise ConfigError(f"boundary: {exc}") from exc
        return kind, planted.values, planted
    if kind == "quadratic":
        quad = _parse_matrix(_get(cp, "boundary", "quad", required=True), "boundary.quad")
        linear = _parse_vector(_get(cp, "boundary", "linear", "0 " * dim), "boundary.linear")
        const = _get_float(cp, "boundary", "const", 0.0)

        def fn(pts, _q=quad, _l=linear, _c=const):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            return 0.5 * np.einsum("ni,ij,nj->n", pts, _q, pts) + pts @ _l + _c

        return kind, fn, None
    if kind == "quadratic_radial":
        # quadratic part plus a fundamental-solution term in the metric of
        # the operator derivative at that quadratic part
        quad = _parse_matrix(_get(cp, "boundary", "quad", required=True), "boundary.quad")
        linear = _parse_vector(_get(cp, "boundary", "linear", "0 " * dim), "boundary.linear")
        const = _get_float(cp, "boundary", "const", 0.0)
        coeff = _get_float(cp, "boundary", "radial_coeff", 0.0)
        minv = metric_inverse(op.gradient(SymMatrix.from_matrix(quad)))

        def fn(pts, _q=quad, _l=linear, _c=const, _g=coeff, _m=minv, _d=dim):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            out = 0.5 * np.einsum("ni,ij,nj->n", pts, _q, pts) + pts @ _l + _c
            return out + _g * fundamental_values(_m, pts, _d)

        return kind, fn, None
    if kind == "pucci_radial":
        if not isinstance(op, (PucciPlusOp,)):
            raise ConfigError("boundary.kind pucci_radial requires a pucci+ operator")
        try:
            _, profile = pucci_radial_profile(op.lam, op.Lam, dim)
        except ValueError as exc:
            raise ConfigError(f"boundary: {exc}") from exc
        return kind, profile, None
    raise ConfigError(f"boundary.kind: unknown kind {kind!r}")


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    for item, value in (overrides or {}).items():
        if "." not in item:
            raise ConfigError(f"override {item!r} must look like section.key")
        sec, key = item.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, value)

    for sec in cp.sections():
        if sec not in _ALLOWED_KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp.options(sec):
            if key not in _ALLOWED_KEYS[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
    for sec in _REQUIRED_SECTIONS:
        if not cp.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]")

    op = _build_operator(cp)
    dim = int(_get_float(cp, "grid", "dim", required=True))
    r_in = _get_float(cp, "grid", "r_in", required=True)
    r_out = _get_float(cp, "grid", "r_out", required=True)
    h = _get_float(cp, "grid", "h", required=True)
    if op.dim is not None and op.dim != dim:
        raise ConfigError(f"grid.dim = {dim} does not match operator dim {op.dim}")

    kind, fn, planted = _build_boundary(cp, op, dim)

    tol = _get_float(cp, "solver", "tol", 1e-8)
    max_iter = int(_get_float(cp, "solver", "max_iter", 40))
    damping = _get_float(cp, "solver", "damping", 1.0)
    method = (_get(cp, "solver", "method", "auto") or "auto").strip().lower()
    if tol <= 0:
        raise ConfigError("solver.tol must be positive")
    if damping <= 0 or damping > 1:
        raise ConfigError("solver.damping must lie in (0, 1]")

    shells_raw = _get(cp, "fit", "shells", "")
    shells = [float(v) for v in shells_raw.split()] if shells_raw else []
    for r in shells:
        if not (r_in < r < r_out):
            raise ConfigError(f"fit.shells: radius {r} outside ({r_in}, {r_out})")
    fit_tol = _get_float(cp, "fit", "tolerance", 0.02)
    if fit_tol <= 0:
        raise ConfigError("fit.tolerance must be positive")
    include_tail = (_get(cp, "fit", "include_tail", "true") or "true").strip().lower() in (
        "1",
        "true",
        "yes",
        "on",
    )

    out_dir = _get(cp, "output", "dir", "runs/out")
    seed = int(_get_float(cp, "output", "seed", 1234))
    svg = (_get(cp, "output", "svg", "false") or "false").strip().lower() in (
        "1",
        "true",
        "yes",
        "on",
    )

    return ExperimentConfig(
        operator=op,
        dim=dim,
        r_in=r_in,
        r_out=r_out,
        h=h,
        boundary_kind=kind,
        boundary_fn=fn,
        planted=planted,
        method=method,
        tol=tol,
        max_iter=max_iter,
        damping=damping,
        shells=shells,
        fit_tolerance=fit_tol,
        include_tail=include_tail,
        out_dir=out_dir,
        seed=seed,
        svg=svg,
    )


def parse_config_file(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
