"""Fully nonlinear uniformly elliptic operators acting on symmetric matrices.

The lab works with three operator families: constant-coefficient linear
operators M -> tr(B M), finite maxima of such operators (Bellman type,
convex by construction), and the two extremal operators that bound every
operator with ellipticity band [lam, Lam].  Alongside evaluation and
derivative selection, this module provides an empirical ellipticity probe
and the anisotropic fundamental-solution / dipole profiles that the
far-field expansion is built from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SymMatrix",
    "EllipticOperator",
    "LinearOp",
    "BellmanMaxOp",
    "PucciPlusOp",
    "PucciMinusOp",
    "EllipticityViolation",
    "MetricConditionError",
    "ellipticity_probe",
    "metric_inverse",
    "fundamental_value",
    "fundamental_values",
    "dipole_value",
    "dipole_values",
]


@dataclass(frozen=True)
class SymMatrix:
    """Real symmetric matrix stored by its upper triangle (row-major).

    ``dim`` is the side length; grids only use dims 2 and 3, but the type
    itself allows any dim >= 2 (the radial extremal-operator residuals are
    checked in dimension 5).
    """

    dim: int
    entries: tuple

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"SymMatrix dim must be >= 2, got {self.dim}")
        want = self.dim * (self.dim + 1) // 2
        if len(self.entries) != want:
            raise ValueError(
                f"SymMatrix dim {self.dim} needs {want} upper-triangle entries, "
                f"got {len(self.entries)}"
            )
        object.__setattr__(self, "entries", tuple(float(v) for v in self.entries))

    @classmethod
    def from_matrix(cls, arr, tol: float = 1e-8) -> "SymMatrix":
        """Build from a full matrix; rejects asymmetry beyond ``tol`` (relative)."""
        a = np.asarray(arr, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.T).max() > tol * scale:
            raise ValueError("matrix is not symmetric")
        sym = 0.5 * (a + a.T)
        iu = np.triu_indices(a.shape[0])
        return cls(a.shape[0], tuple(sym[iu]))

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls.from_matrix(np.eye(dim))

    @classmethod
    def diag(cls, values) -> "SymMatrix":
        return cls.from_matrix(np.diag(np.asarray(values, dtype=float)))

    @property
    def mat(self) -> np.ndarray:
        """Full dense matrix (copy-safe: treated as read-only)."""
        cached = self.__dict__.get("_mat")
        if cached is None:
            m = np.zeros((self.dim, self.dim))
            iu = np.triu_indices(self.dim)
            m[iu] = self.entries
            m = m + np.triu(m, 1).T
            m.setflags(write=False)
            object.__setattr__(self, "_mat", m)
            cached = m
        return cached

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.mat)

    def norm2(self) -> float:
        """Spectral norm."""
        return float(np.abs(self.eigenvalues()).max())

    def __repr__(self):
        rows = "; ".join(
            " ".join(f"{v:.6g}" for v in self.mat[i]) for i in range(self.dim)
        )
        return f"SymMatrix({rows})"


def canonical_eigh(mat: np.ndarray):
    """Eigendecomposition with a deterministic convention.

    Eigenvalues sorted descending; each eigenvector flipped so its first
    entry above 1e-14 in magnitude is positive.
    """
    w, v = np.linalg.eigh(np.asarray(mat, dtype=float))
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for k in range(v.shape[1]):
        col = v[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            v[:, k] = -col
    return w, v


def _as_batch(M) -> np.ndarray:
    if isinstance(M, SymMatrix):
        return np.asarray(M.mat, dtype=float)[None]
    a = np.asarray(M, dtype=float)
    if a.ndim == 2:
        return a[None]
    if a.ndim == 3:
        return a
    raise ValueError(f"expected a matrix or batch of matrices, got shape {a.shape}")


class EllipticOperator:
    """Base class: uniformly elliptic operator on symmetric matrices.

    ``band`` is the ellipticity interval (lam, Lam).  ``evaluate_many`` /
    ``gradient_many`` are the vectorized cores; the scalar entry points
    delegate to them so point queries and bulk assembly share arithmetic.
    """

    lam: float
    Lam: float
    dim: int | None  # None for dimension-free operators (Pucci)

    @property
    def band(self):
        return (self.lam, self.Lam)

    def _check_dim(self, nd: int):
        if self.dim is not None and nd != self.dim:
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, matrix dim {nd}")

    def evaluate(self, M) -> float:
        return float(self.evaluate_many(_as_batch(M))[0])

    def gradient(self, M) -> SymMatrix:
        g = self.gradient_many(_as_batch(M))[0]
        return SymMatrix.from_matrix(0.5 * (g + g.T))

    def evaluate_many(self, H: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient_many(self, H: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _check_band(lam: float, Lam: float):
    if not (0.0 < lam <= Lam):
        raise ValueError(f"ellipticity band needs 0 < lam <= Lam, got ({lam}, {Lam})")


def _check_in_band(mat: SymMatrix, lam: float, Lam: float, what: str):
    eigs = mat.eigenvalues()
    slack = 1e-12 * max(1.0, abs(Lam))
    if eigs.min() < lam - slack or eigs.max() > Lam + slack:
        raise ValueError(
            f"{what} has eigenvalues {eigs} outside the ellipticity band [{lam}, {Lam}]"
        )


class LinearOp(EllipticOperator):
    """F(M) = tr(B M) for a fixed SPD-in-band coefficient matrix B."""

    def __init__(self, mat, lam: float | None = None, Lam: float | None = None):
        self.mat = mat if isinstance(mat, SymMatrix) else SymMatrix.from_matrix(mat)
        eigs = self.mat.eigenvalues()
        self.lam = float(eigs.min()) if lam is None else float(lam)
        self.Lam = float(eigs.max()) if Lam is None else float(Lam)
        _check_band(self.lam, self.Lam)
        _check_in_band(self.mat, self.lam, self.Lam, "coefficient matrix")
        self.dim = self.mat.dim

    def evaluate_many(self, H):
        H = np.asarray(H, dtype=float)
        self._check_dim(H.shape[-1])
        return np.einsum("ij,nij->n", self.mat.mat, H)

    def gradient_many(self, H):
        H = np.asarray(H, dtype=float)
        self._check_dim(H.shape[-1])
        return np.broadcast_to(self.mat.mat, H.shape).copy()

    def __repr__(self):
        return f"LinearOp({self.mat!r}, band={self.band})"


class BellmanMaxOp(EllipticOperator):
    """F(M) = max_k tr(B_k M) + c_k over a finite family; convex in M."""

    def __init__(self, members, lam: float | None = None, Lam: float | None = None):
        mem = []
        for b, c in members:
            bm = b if isinstance(b, SymMatrix) else SymMatrix.from_matrix(b)
            mem.append((bm, float(c)))
        if not mem:
            raise ValueError("BellmanMax family must be nonempty")
        dims = {b.dim for b, _ in mem}
        if len(dims) != 1:
            raise ValueError(f"family members have mixed dimensions {sorted(dims)}")
        self.members = tuple(mem)
        all_eigs = np.concatenate([b.eigenvalues() for b, _ in mem])
        self.lam = float(all_eigs.min()) if lam is None else float(lam)
        self.Lam = float(all_eigs.max()) if Lam is None else float(Lam)
        _check_band(self.lam, self.Lam)
        for i, (b, _) in enumerate(mem):
            _check_in_band(b, self.lam, self.Lam, f"family member {i}")
        self.dim = dims.pop()
        self._stack = np.stack([b.mat for b, _ in mem])  # (K, n, n)
        self._offsets = np.array([c for _, c in mem])

    def member_values(self, H) -> np.ndarray:
        """Per-member values tr(B_k M) + c_k, shape (K, N)."""
        H = np.asarray(H, dtype=float)
        self._check_dim(H.shape[-1])
        return np.einsum("kij,nij->kn", self._stack, H) + self._offsets[:, None]

    def evaluate_many(self, H):
        return self.member_values(H).max(axis=0)

    def argmax_many(self, H) -> np.ndarray:
        """Lowest-index maximizer per matrix (deterministic at ties)."""
        return self.member_values(H).argmax(axis=0)

    def gradient_many(self, H):
        k = self.argmax_many(H)
        return self._stack[k]

    def __repr__(self):
        return f"BellmanMaxOp({len(self.members)} members, band={self.band})"


class _PucciBase(EllipticOperator):
    plus: bool

    def __init__(self, lam: float, Lam: float):
        _check_band(lam, Lam)
        self.lam = float(lam)
        self.Lam = float(Lam)
        self.dim = None

    def evaluate_many(self, H):
        w = np.linalg.eigvalsh(np.asarray(H, dtype=float))
        pos = np.clip(w, 0.0, None).sum(axis=-1)
        neg = np.clip(w, None, 0.0).sum(axis=-1)
        if self.plus:
            return self.Lam * pos + self.lam * neg
        return self.lam * pos + self.Lam * neg

    def gradient_many(self, H):
        # Zero eigenvalues classify as nonnegative; within a repeated
        # eigenspace the projector sum is basis-independent, so the
        # result is deterministic.
        w, v = np.linalg.eigh(np.asarray(H, dtype=float))
        if self.plus:
            coef = np.where(w >= 0.0, self.Lam, self.lam)
        else:
            coef = np.where(w >= 0.0, self.lam, self.Lam)
        g = np.einsum("nik,nk,njk->nij", v, coef, v)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def __repr__(self):
        sign = "+" if self.plus else "-"
        return f"Pucci{sign}({self.lam}, {self.Lam})"


class PucciPlusOp(_PucciBase):
    """Maximal extremal operator: Lam on nonnegative, lam on negative eigenvalues."""

    plus = True


class PucciMinusOp(_PucciBase):
    """Minimal extremal operator: lam on nonnegative, Lam on negative eigenvalues."""

    plus = False


class EllipticityViolation(RuntimeError):
    """Raised when the probe finds an increment outside the declared band."""

    def __init__(self, msg, M=None, N=None, ratio=None):
        super().__init__(msg)
        self.M = M
        self.N = N
        self.ratio = ratio


def ellipticity_probe(op: EllipticOperator, trials: int, seed: int, dim: int | None = None):
    """Empirical ellipticity constants from random increments.

    Samples random symmetric M and random PSD N = V^T V and returns the
    tightest constants (lo, hi) such that lo * ||N|| <= F(M+N) - F(M)
    <= hi * ||N|| over the sample.  ||N|| is the trace (nuclear) norm,
    under which all in-band operator kinds here satisfy the two-sided
    bound exactly; empirical constants are norm-convention dependent.

    Raises :class:`EllipticityViolation` with the witnessing pair if a
    sampled ratio leaves [lam, Lam] beyond rounding slack.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = op.dim if op.dim is not None else dim
    if n is None:
        raise ValueError("dimension-free operator: pass dim explicitly")
    rng = np.random.default_rng(seed)
    lo = np.inf
    hi = -np.inf
    lam, Lam = op.band
    for _ in range(trials):
        a = rng.normal(size=(n, n))
        M = 0.5 * (a + a.T)
        v = rng.normal(size=(n, n))
        N = v.T @ v
        tn = float(np.trace(N))
        f0 = op.evaluate(SymMatrix.from_matrix(M))
        f1 = op.evaluate(SymMatrix.from_matrix(M + N))
        ratio = (f1 - f0) / tn
        slack = 1e-12 * max(1.0, (abs(f0) + abs(f1)) / tn)
        if ratio < lam - slack or ratio > Lam + slack:
            raise EllipticityViolation(
                f"sampled increment ratio {ratio} outside band [{lam}, {Lam}]"
                f" (trace-norm convention); witness M={M.tolist()}, N={N.tolist()}",
                M=M,
                N=N,
                ratio=ratio,
            )
        lo = min(lo, ratio)
        hi = max(hi, ratio)
    return lo, hi


class MetricConditionError(ValueError):
    """Derivative matrix too ill-conditioned to define the expansion metric."""


def metric_inverse(m: SymMatrix, max_condition: float = 1e8) -> SymMatrix:
    """Inverse of an SPD matrix by direct solve against the identity.

    The result is symmetrized; condition numbers above ``max_condition``
    are rejected rather than silently regularized.
    """
    a = m.mat
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > max_condition:
        raise MetricConditionError(
            f"condition number {cond:.3e} exceeds {max_condition:.1e}"
        )
    inv = np.linalg.solve(a, np.eye(m.dim))
    return SymMatrix.from_matrix(0.5 * (inv + inv.T), tol=1e-6)


def _quadratic_form(minv: SymMatrix, pts: np.ndarray) -> np.ndarray:
    q = np.einsum("ni,ij,nj->n", pts, minv.mat, pts)
    if np.any(q <= 0.0):
        raise ValueError("singular point: quadratic form vanished (x = 0?)")
    return q


def fundamental_values(minv: SymMatrix, pts, dim: int) -> np.ndarray:
    """Anisotropic fundamental-solution profile at points ``pts``.

    Decaying power branch for dim >= 3, half-log branch for dim = 2,
    both built on the metric quadratic form x^T minv x.  With minv = I
    this is exactly |x|^(2-dim), respectively log |x|.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    q = _quadratic_form(minv, pts)
    if dim >= 3:
        return np.abs(q) ** (0.5 * (2 - dim))
    if dim == 2:
        return 0.5 * np.log(np.abs(q))
    raise ValueError(f"dim must be >= 2, got {dim}")


def fundamental_value(minv: SymMatrix, x, dim: int) -> float:
    return float(fundamental_values(minv, x, dim)[0])


def dipole_values(vec, minv: SymMatrix, pts, dim: int) -> np.ndarray:
    """Dipole-type tail (e . x) |x^T minv x|^(-dim/2) at points ``pts``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    e = np.asarray(vec, dtype=float)
    q = _quadratic_form(minv, pts)
    return (pts @ e) * np.abs(q) ** (-0.5 * dim)


def dipole_value(vec, minv: SymMatrix, x, dim: int) -> float:
    return float(dipole_values(vec, minv, x, dim)[0])
