"""Point-sample finite differences on arbitrary callables.

Used by the closed-form residual oracles and the inversion-identity
check, where no grid exists: second-order central stencils evaluated
directly on a function of d-dimensional points.
"""

from __future__ import annotations

import numpy as np


def eval_points(fn, pts: np.ndarray) -> np.ndarray:
    """Evaluate fn on an (m, d) array, accepting both vectorized and scalar fns."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    try:
        out = np.asarray(fn(pts), dtype=float)
        if out.shape == (pts.shape[0],):
            return out
    except Exception:
        pass
    return np.array([float(fn(p)) for p in pts])


def fd_gradient(fn, x, step: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.size
    pts = np.repeat(x[None], 2 * d, axis=0)
    for i in range(d):
        pts[2 * i, i] += step
        pts[2 * i + 1, i] -= step
    vals = eval_points(fn, pts)
    return (vals[0::2] - vals[1::2]) / (2.0 * step)


def fd_hessian(fn, x, step: float) -> np.ndarray:
    """Second-order symmetric Hessian stencil: central diagonals, 4-point crosses."""
    x = np.asarray(x, dtype=float)
    d = x.size
    pts = [x]
    for i in range(d):
        for s in (step, -step):
            p = x.copy()
            p[i] += s
            pts.append(p)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        for si, sj in ((step, step), (step, -step), (-step, step), (-step, -step)):
            p = x.copy()
            p[i] += si
            p[j] += sj
            pts.append(p)
    vals = eval_points(fn, np.array(pts))
    h2 = step * step
    H = np.zeros((d, d))
    f0 = vals[0]
    for i in range(d):
        fp, fm = vals[1 + 2 * i], vals[2 + 2 * i]
        H[i, i] = (fp + fm - 2.0 * f0) / h2
    base = 1 + 2 * d
    for k, (i, j) in enumerate(pairs):
        fpp, fpm, fmp, fmm = vals[base + 4 * k : base + 4 * k + 4]
        H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h2)
    return H


def fd_laplacian(fn, x, step: float) -> float:
    x = np.asarray(x, dtype=float)
    d = x.size
    pts = [x]
    for i in range(d):
        for s in (step, -step):
            p = x.copy()
            p[i] += s
            pts.append(p)
    vals = eval_points(fn, np.array(pts))
    return float((vals[1:].sum() - 2.0 * d * vals[0]) / (step * step))


def fd_operator_gradient(op, M: np.ndarray, step: float) -> np.ndarray:
    """Central-difference derivative of op.evaluate in every symmetric direction.

    Independent check of the analytic derivative selections; valid where
    the argmax / eigenvalues are simple.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    from .operators import SymMatrix

    G = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            fp = op.evaluate(SymMatrix.from_matrix(M + step * E))
            fm = op.evaluate(SymMatrix.from_matrix(M - step * E))
            deriv = (fp - fm) / (2.0 * step)
            if i == j:
                G[i, i] = deriv
            else:
                # direction had weight 1 in both entries
                G[i, j] = G[j, i] = deriv / 2.0
    return G
