"""Closed-form solutions used as planted ground truth and residual oracles.

Planted expansions exist for linear operators only: for those, the
quadratic / linear / constant parts, the fundamental-solution term and
the dipole tail are each annihilated exactly by tr(B D^2 .) away from
the origin, so recovery experiments have an honest oracle.  The radial
power profile of the maximal extremal operator plays the same role in
the nonlinear corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .findiff import fd_hessian
from .operators import (
    LinearOp,
    PucciPlusOp,
    SymMatrix,
    dipole_values,
    fundamental_values,
    metric_inverse,
)

__all__ = [
    "PlantedExpansion",
    "planted_residual_check",
    "pucci_radial_exponent",
    "pucci_radial_profile",
    "pucci_radial_residual",
]


@dataclass(frozen=True, eq=False)
class PlantedExpansion:
    """Exact solution of tr(B D^2 u) = 0 on the punctured space.

    u(x) = 1/2 x^T quad x + linear . x + const
         + gamma_coeff * Gamma(x) + dipole-tail(x)

    with Gamma and the tail built on the metric B^{-1}.  The quadratic
    part must satisfy tr(B quad) = 0 so every term solves the equation.
    """

    dim: int
    op_matrix: SymMatrix
    quad: SymMatrix
    linear: np.ndarray = None
    const: float = 0.0
    gamma_coeff: float = 0.0
    dipole: np.ndarray = None

    def __post_init__(self):
        lin = np.zeros(self.dim) if self.linear is None else np.asarray(self.linear, float)
        dip = np.zeros(self.dim) if self.dipole is None else np.asarray(self.dipole, float)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "dipole", dip)
        if self.op_matrix.dim != self.dim or self.quad.dim != self.dim:
            raise ValueError("matrix dimensions do not match dim")
        if lin.shape != (self.dim,) or dip.shape != (self.dim,):
            raise ValueError("vector coefficients must have length dim")
        eigs = self.op_matrix.eigenvalues()
        if eigs.min() <= 0.0:
            raise ValueError("operator coefficient matrix must be SPD")
        b, a = self.op_matrix.mat, self.quad.mat
        ortho = float(np.sum(b * a))
        scale = max(1.0, float(np.abs(b).sum() * np.abs(a).max()))
        if abs(ortho) > 1e-12 * scale:
            raise ValueError(
                f"quadratic part does not solve the equation: tr(B quad) = {ortho:.3e}"
            )
        object.__setattr__(self, "_minv", metric_inverse(self.op_matrix))

    @property
    def metric_inv(self) -> SymMatrix:
        return self._minv

    def operator(self) -> LinearOp:
        return LinearOp(self.op_matrix)

    def values(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = 0.5 * np.einsum("ni,ij,nj->n", pts, self.quad.mat, pts)
        out += pts @ self.linear + self.const
        if self.gamma_coeff != 0.0:
            out += self.gamma_coeff * fundamental_values(self._minv, pts, self.dim)
        if np.any(self.dipole != 0.0):
            out += dipole_values(self.dipole, self._minv, pts, self.dim)
        return out

    def value(self, x) -> float:
        return float(self.values(np.asarray(x, dtype=float)[None])[0])

    def __call__(self, pts):
        return self.values(pts)


def planted_residual_check(p: PlantedExpansion, samples, step: float) -> float:
    """Max |tr(B D^2_h u)| of the planted solution over sample points.

    D^2_h is the point-sample central stencil with spacing ``step``; the
    result must vanish at second order under step refinement.  Samples
    closer than 10*step to the origin are rejected.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    radii = np.linalg.norm(samples, axis=1)
    if np.any(radii < 10.0 * step):
        bad = samples[int(np.argmin(radii))]
        raise ValueError(f"sample {bad.tolist()} is within 10*step of the origin")
    b = p.op_matrix.mat
    worst = 0.0
    for x in samples:
        h = fd_hessian(p.values, x, step)
        worst = max(worst, abs(float(np.sum(b * h))))
    return worst


def pucci_radial_exponent(lam: float, Lam: float, dim: int) -> float:
    """Growth/decay exponent of the radial maximal-operator profile.

    Returns 1 - (dim - 1) lam / Lam; the profile r^exponent solves the
    maximal extremal equation for r > 0 whenever (dim - 1) lam / Lam > 1.
    Monotone increasing in Lam, decreasing in lam and dim.
    """
    if not (0.0 < lam <= Lam):
        raise ValueError(f"need 0 < lam <= Lam, got ({lam}, {Lam})")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    return 1.0 - (dim - 1) * lam / Lam


def pucci_radial_profile(lam: float, Lam: float, dim: int):
    """The decaying radial profile |x|^m with m = 1 - (dim-1) lam / Lam.

    Only the decaying branch is provided; it requires (dim-1) lam / Lam > 1
    (the borderline case m = 0 degenerates to a constant, which is still a
    solution).  The second, growing solution branch is intentionally not
    shipped.
    """
    m = pucci_radial_exponent(lam, Lam, dim)
    if m > 0.0:
        raise ValueError(
            f"exponent {m} > 0: the decaying profile requires (dim-1)*lam/Lam >= 1"
        )

    def profile(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if np.any(r == 0.0):
            raise ValueError("profile is singular at the origin")
        return r**m

    return m, profile


def pucci_radial_residual(lam: float, Lam: float, dim: int, samples, step: float) -> float:
    """Max |maximal-operator residual| of the radial profile at sample points.

    Uses the point-sample stencil Hessian; decays at second order under
    step refinement.  Rejected when the exponent regime admits no decaying
    profile, or when samples sit within 10*step of the origin.
    """
    m, profile = pucci_radial_profile(lam, Lam, dim)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    radii = np.linalg.norm(samples, axis=1)
    if np.any(radii < 10.0 * step):
        bad = samples[int(np.argmin(radii))]
        raise ValueError(f"sample {bad.tolist()} is within 10*step of the origin")
    op = PucciPlusOp(lam, Lam)
    worst = 0.0
    for x in samples:
        h = fd_hessian(profile, x, step)
        worst = max(worst, abs(op.evaluate(SymMatrix.from_matrix(h, tol=1e-6))))
    return worst
