"""Linearized coefficients along the segment to the far-field Hessian.

For a convex operator F the difference F(D^2 u) - F(A) equals
a(x) : (D^2 u - A) with a(x) the derivative of F averaged along the
matrix segment from A to D^2 u.  This module computes those coefficient
fields by fixed Gauss-Legendre quadrature, measures how fast they settle
to their limit, and runs the power-growth subsolution certificate that
controls positive solutions in the plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csvio import SCHEMA_COEFFS, format_float, open_csv_writer
from .discretization import AnnulusGrid, Field, interior_hessians
from .operators import BellmanMaxOp, EllipticOperator, SymMatrix
from .rates import DecayFit, fit_loglog_slope

__all__ = [
    "CoefficientField",
    "linearized_coeffs",
    "coeff_decay_rate",
    "SubsolutionCertificate",
    "CertificateError",
    "subsolution_certificate",
    "power_profile_hessian",
]

# 8-point Gauss-Legendre on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
GL_NODES = 0.5 * (_GL_X + 1.0)
GL_WEIGHTS = 0.5 * _GL_W

KINK_GAP = 1e-9


@dataclass
class CoefficientField:
    """Per-interior-node coefficient matrices with their far-field limit.

    ``kink_mask`` flags nodes where two family members of a Bellman
    operator came within 1e-9 at some quadrature point, i.e. where the
    piecewise-constant integrand makes the fixed rule inexact.
    """

    grid: AnnulusGrid
    values: np.ndarray        # (n_interior, d, d)
    limit: SymMatrix
    kink_mask: np.ndarray = None

    def __post_init__(self):
        n_int = self.grid.interior_ids.size
        if self.values.shape != (n_int, self.grid.dim, self.grid.dim):
            raise ValueError("coefficient array shape does not match the grid")
        if self.kink_mask is None:
            self.kink_mask = np.zeros(n_int, dtype=bool)

    def spectra(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values)

    def write_csv(self, path_or_file) -> None:
        g = self.grid
        iu = np.triu_indices(g.dim)
        cols = [f"x{i + 1}" for i in range(g.dim)]
        cols += [f"a{i + 1}{j + 1}" for i, j in zip(*iu)]
        cols += ["kink"]
        with open_csv_writer(path_or_file, cols, SCHEMA_COEFFS) as writer:
            for row, nid in enumerate(g.interior_ids):
                out = [format_float(c) for c in g.coords[nid]]
                out += [format_float(v) for v in self.values[row][iu]]
                out.append("1" if self.kink_mask[row] else "0")
                writer(out)


def linearized_coeffs(
    op: EllipticOperator,
    u: Field,
    A: SymMatrix,
    check_tol: float = 1e-6,
) -> CoefficientField:
    """Coefficient field a(x) = mean of op.gradient along the segment to A.

    Integrates over t in [0, 1] with the fixed 8-point Gauss-Legendre
    rule applied to t D^2 u(x) + (1 - t) A; the limit is op.gradient(A).
    Requires |op(A)| <= check_tol so the limit matrix is meaningful.
    """
    fval = abs(op.evaluate(A))
    if fval > check_tol:
        raise ValueError(
            f"far-field Hessian is not an operator root: |F(A)| = {fval:.3e} > {check_tol:.1e}"
        )
    H = interior_hessians(u)
    a_mat = np.broadcast_to(A.mat, H.shape)
    acc = np.zeros_like(H)
    kink = np.zeros(H.shape[0], dtype=bool)
    is_bellman = isinstance(op, BellmanMaxOp)
    for t, w in zip(GL_NODES, GL_WEIGHTS):
        Mt = t * H + (1.0 - t) * a_mat
        acc += w * op.gradient_many(Mt)
        if is_bellman and len(op.members) > 1:
            vals = np.sort(op.member_values(Mt), axis=0)
            kink |= (vals[-1] - vals[-2]) < KINK_GAP
    return CoefficientField(u.grid, acc, op.gradient(A), kink)


def coeff_decay_rate(cf: CoefficientField, shells) -> DecayFit:
    """Slope of log(max-shell ||a(x) - limit||_2) against log(radius).

    Shells whose deviation sits at the round-off floor are excluded and
    listed on the fit; with everything excluded the exponent reports as
    not applicable.
    """
    shells = [float(r) for r in shells]
    if len(shells) < 3 or any(b <= a for a, b in zip(shells, shells[1:])):
        raise ValueError("need >= 3 strictly increasing shell radii")
    g = cf.grid
    devs = []
    for r in shells:
        ids = g.shell_ids(r)
        if ids.size == 0:
            raise ValueError(f"shell at radius {r} holds no interior nodes")
        rows = g.interior_pos[ids]
        diff = cf.values[rows] - cf.limit.mat
        devs.append(float(np.abs(np.linalg.eigvalsh(diff)).max()))
    return fit_loglog_slope(shells, devs)


def power_profile_hessian(pts: np.ndarray, alpha: float) -> np.ndarray:
    """Closed-form Hessian of |x|^alpha at points ``pts`` (shape (m, d, d)).

    D_ij = alpha |x|^(alpha-2) delta_ij + alpha (alpha-2) |x|^(alpha-4) x_i x_j.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    r2 = np.einsum("ni,ni->n", pts, pts)
    if np.any(r2 == 0.0):
        raise ValueError("profile Hessian is singular at the origin")
    d = pts.shape[1]
    eye = np.eye(d)
    ra = r2 ** (0.5 * alpha - 1.0)
    rb = r2 ** (0.5 * alpha - 2.0)
    return (
        alpha * ra[:, None, None] * eye
        + alpha * (alpha - 2.0) * rb[:, None, None] * np.einsum("ni,nj->nij", pts, pts)
    )


@dataclass
class SubsolutionCertificate:
    """Radius beyond which |x|^alpha is certified as a subsolution.

    Certification per shell combines the closed-form bound
    alpha^2 - eps(r) alpha (3 - alpha) >= 0, with eps(r) the largest
    sampled spectral deviation ||a(x) - I||_2 on the shell, and the
    sampled sign of the actual contraction a(x) : D^2 |x|^alpha (the
    bound implies the sign, pairing the spectral norm of a - I with the
    nuclear norm of the profile Hessian).
    """

    alpha: float
    radius: float
    shells: list
    eps_by_shell: list
    threshold_by_shell: list
    min_value_by_shell: list
    samples_per_shell: int


class CertificateError(RuntimeError):
    def __init__(self, msg, worst_point=None, worst_value=None):
        super().__init__(msg)
        self.worst_point = worst_point
        self.worst_value = worst_value


def subsolution_certificate(
    a_fn,
    alpha: float,
    shells,
    samples_per_shell: int = 64,
) -> SubsolutionCertificate:
    """Plane-case certificate that v = |x|^alpha is a subsolution far out.

    ``a_fn`` maps a point to a coefficient SymMatrix (or 2x2 array).
    Points are sampled at equispaced angles per shell; the certificate
    radius is the smallest sampled shell from which every larger shell
    passes both the threshold bound and the sampled sign check.  With no
    qualifying shell the failure carries the worst violating point.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    shells = [float(r) for r in shells]
    if not shells or any(b <= a for a, b in zip(shells, shells[1:])):
        raise ValueError("need strictly increasing shell radii")
    if samples_per_shell < 4:
        raise ValueError("need at least 4 samples per shell")
    angles = 2.0 * np.pi * np.arange(samples_per_shell) / samples_per_shell
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    eye = np.eye(2)

    eps_by_shell, thr_by_shell, min_by_shell = [], [], []
    worst_val, worst_pt = np.inf, None
    ok = []
    for r in shells:
        pts = r * ring
        hess = power_profile_hessian(pts, alpha)
        eps_r = 0.0
        min_r = np.inf
        for x, Dv in zip(pts, hess):
            a = a_fn(x)
            a = a.mat if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)
            eps_r = max(eps_r, float(np.abs(np.linalg.eigvalsh(a - eye)).max()))
            val = float(np.sum(a * Dv))
            if val < min_r:
                min_r = val
            if val < worst_val:
                worst_val, worst_pt = val, x.copy()
        thr = alpha * alpha - eps_r * alpha * (3.0 - alpha)
        eps_by_shell.append(eps_r)
        thr_by_shell.append(thr)
        min_by_shell.append(min_r)
        scale = alpha * alpha * r ** (alpha - 2.0)
        ok.append(thr >= 0.0 and min_r >= -1e-12 * max(1.0, scale))

    start = None
    for s in range(len(shells)):
        if all(ok[s:]):
            start = s
            break
    if start is None:
        raise CertificateError(
            f"no shell qualifies for alpha = {alpha}; worst sampled value "
            f"{worst_val:.6g} at {None if worst_pt is None else worst_pt.tolist()}",
            worst_point=worst_pt,
            worst_value=worst_val,
        )
    return SubsolutionCertificate(
        alpha=alpha,
        radius=shells[start],
        shells=shells,
        eps_by_shell=eps_by_shell,
        threshold_by_shell=thr_by_shell,
        min_value_by_shell=min_by_shell,
        samples_per_shell=samples_per_shell,
    )
