import numpy as np
import pytest

import farfield as ff


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture(scope="session")
def planted2():
    """Anisotropic plane plant; tr(B quad) = 0 by construction."""
    B = np.array([[1.3, 0.3], [0.3, 0.8]])
    A = np.array([[0.9, 0.25], [0.25, -1.65]])
    return ff.PlantedExpansion(
        2,
        ff.SymMatrix.from_matrix(B),
        ff.SymMatrix.from_matrix(A),
        linear=[0.4, -0.3],
        const=1.2,
        gamma_coeff=0.9,
        dipole=[0.5, -0.35],
    )


@pytest.fixture(scope="session")
def planted3():
    B = np.array([[1.2, 0.2, 0.0], [0.2, 0.9, 0.15], [0.0, 0.15, 1.5]])
    A = np.array([[0.8, 0.3, -0.2], [0.3, -0.5, 0.1], [-0.2, 0.1, -0.44]])
    return ff.PlantedExpansion(
        3,
        ff.SymMatrix.from_matrix(B),
        ff.SymMatrix.from_matrix(A),
        linear=[0.3, -0.2, 0.25],
        const=1.0,
        gamma_coeff=0.8,
        dipole=[0.45, -0.3, 0.2],
    )


@pytest.fixture(scope="session")
def bellman2():
    """Two rotated anisotropic members with a known operator root."""
    th = np.deg2rad(20.0)
    D = np.diag([1.5, 0.75])
    B1 = rotation(th) @ D @ rotation(th).T
    B2 = rotation(-th) @ D @ rotation(-th).T
    op = ff.BellmanMaxOp([(B1, 0.0), (B2, 0.0)])
    m = 0.5
    p0 = 0.4
    q0 = (-2.0 * B1[0, 1] * m - B1[0, 0] * p0) / B1[1, 1]
    a_star = np.array([[p0, m], [m, q0]])
    assert abs(op.evaluate(ff.SymMatrix.from_matrix(a_star))) < 1e-12
    return op, a_star


def quadratic_fn(A, b=None, c=0.0):
    A = np.asarray(A, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)

    def fn(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return 0.5 * np.einsum("ni,ij,nj->n", pts, A, pts) + pts @ b + c

    return fn
