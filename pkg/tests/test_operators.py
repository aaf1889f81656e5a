import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import farfield as ff
from farfield.findiff import fd_operator_gradient
from farfield.operators import canonical_eigh


def sym(entries_2x2):
    return ff.SymMatrix.from_matrix(np.array(entries_2x2))


# ---------------------------------------------------------------- evaluate

def test_linear_trace_cancellation():
    op = ff.LinearOp(np.eye(2))
    assert op.evaluate(ff.SymMatrix.diag([1.0, -1.0])) == 0.0


def test_bellman_max_of_two():
    op = ff.BellmanMaxOp([(np.eye(2), 0.0), (2.0 * np.eye(2), 0.0)])
    assert op.evaluate(ff.SymMatrix.identity(2)) == 4.0


def test_pucci_plus_eigenvalue_sum():
    # 2 * 1 - 1 * 1 from the eigenvalue-sum formula
    op = ff.PucciPlusOp(1.0, 2.0)
    assert op.evaluate(ff.SymMatrix.diag([1.0, -1.0])) == pytest.approx(1.0, abs=1e-14)


def test_pucci_minus_swaps_weights():
    op = ff.PucciMinusOp(1.0, 2.0)
    assert op.evaluate(ff.SymMatrix.diag([1.0, -1.0])) == pytest.approx(-1.0, abs=1e-14)


def test_dimension_mismatch_rejected():
    op = ff.LinearOp(np.eye(2))
    with pytest.raises(ValueError, match="dimension mismatch"):
        op.evaluate(ff.SymMatrix.identity(3))


def test_band_validation():
    with pytest.raises(ValueError, match="band"):
        ff.PucciPlusOp(2.0, 1.0)
    with pytest.raises(ValueError, match="outside the ellipticity band"):
        ff.LinearOp(np.diag([1.0, 3.0]), lam=1.0, Lam=2.0)
    with pytest.raises(ValueError, match="nonempty"):
        ff.BellmanMaxOp([])


# ---------------------------------------------------------------- gradient

def test_linear_gradient_is_coefficient():
    B = sym([[1.3, 0.3], [0.3, 0.8]])
    op = ff.LinearOp(B)
    assert np.allclose(op.gradient(ff.SymMatrix.diag([5.0, -2.0])).mat, B.mat)


def test_bellman_gradient_unique_argmax():
    op = ff.BellmanMaxOp([(np.eye(2), 0.0), (2.0 * np.eye(2), 0.0)])
    g = op.gradient(ff.SymMatrix.identity(2))
    assert np.allclose(g.mat, 2.0 * np.eye(2))


def test_bellman_gradient_tie_lowest_index():
    op = ff.BellmanMaxOp([(np.eye(2), 0.0), (np.eye(2), 0.0)])
    g = op.gradient(ff.SymMatrix.identity(2))
    assert np.allclose(g.mat, np.eye(2))
    assert op.argmax_many(np.eye(2)[None])[0] == 0


def test_pucci_gradient_spectral_assembly():
    op = ff.PucciPlusOp(1.0, 2.0)
    g = op.gradient(ff.SymMatrix.diag([3.0, -1.0]))
    assert np.allclose(g.mat, np.diag([2.0, 1.0]), atol=1e-14)
    # independent check: finite differences of evaluate (simple eigenvalues)
    fd = fd_operator_gradient(op, np.diag([3.0, -1.0]), 1e-6)
    assert np.allclose(g.mat, fd, atol=1e-7)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3))
    M = 0.5 * (a + a.T)
    ops = [
        ff.LinearOp(np.eye(3) + 0.2 * np.diag([1.0, 0.5, -0.3])),
        ff.BellmanMaxOp([(np.eye(3), 0.0), (np.diag([2.0, 1.0, 1.5]), 0.3)]),
        ff.PucciPlusOp(0.5, 2.0),
        ff.PucciMinusOp(0.5, 2.0),
    ]
    for op in ops:
        w = np.linalg.eigvalsh(M)
        if np.abs(np.diff(w)).min() < 1e-3 or np.abs(w).min() < 1e-3:
            continue  # FD oracle needs simple, nonzero eigenvalues
        fd = fd_operator_gradient(op, M, 1e-6)
        assert np.allclose(op.gradient(ff.SymMatrix.from_matrix(M)).mat, fd, atol=5e-7)


@given(
    st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3),
    st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3),
    st.floats(0.0, 1.0),
)
@settings(max_examples=60, deadline=None)
def test_bellman_evaluate_is_convex(e1, e2, t):
    op = ff.BellmanMaxOp(
        [(np.eye(2), 0.0), (np.diag([1.8, 0.9]), -0.4), (np.diag([0.7, 1.4]), 0.2)]
    )
    M1 = np.array([[e1[0], e1[2]], [e1[2], e1[1]]])
    M2 = np.array([[e2[0], e2[2]], [e2[2], e2[1]]])
    lhs = op.evaluate_many((t * M1 + (1 - t) * M2)[None])[0]
    rhs = t * op.evaluate_many(M1[None])[0] + (1 - t) * op.evaluate_many(M2[None])[0]
    assert lhs <= rhs + 1e-10


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_gradient_spectrum_stays_in_band(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, 2))
    M = ff.SymMatrix.from_matrix(0.5 * (a + a.T))
    for op in (
        ff.BellmanMaxOp([(np.diag([1.0, 1.6]), 0.1), (np.diag([1.7, 0.9]), -0.2)]),
        ff.PucciPlusOp(0.8, 1.9),
        ff.PucciMinusOp(0.8, 1.9),
    ):
        eigs = op.gradient(M).eigenvalues()
        lam, Lam = op.band
        assert eigs.min() >= lam - 1e-10 and eigs.max() <= Lam + 1e-10


def test_canonical_eigh_is_deterministic():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    w1, v1 = canonical_eigh(m)
    w2, v2 = canonical_eigh(m.copy())
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)
    assert w1[0] >= w1[1]
    for k in range(2):
        nz = np.flatnonzero(np.abs(v1[:, k]) > 1e-14)
        assert v1[nz[0], k] > 0


# ---------------------------------------------------------------- probe

def test_probe_linear_identity_trace_norm():
    lo, hi = ff.ellipticity_probe(ff.LinearOp(np.eye(2)), trials=100, seed=7)
    assert abs(hi - lo) <= 1e-12
    assert lo == pytest.approx(1.0, abs=1e-12)


def test_probe_pucci_band():
    lo, hi = ff.ellipticity_probe(ff.PucciPlusOp(1.0, 2.0), trials=400, seed=11, dim=3)
    assert lo >= 1.0 - 1e-10
    assert hi <= 2.0 + 1e-10


def test_probe_bellman_identity_family_collapses():
    op = ff.BellmanMaxOp([(np.eye(2), 0.0), (np.eye(2), 0.0)])
    lo, hi = ff.ellipticity_probe(op, trials=100, seed=3)
    assert abs(hi - lo) <= 1e-12 and lo == pytest.approx(1.0, abs=1e-12)


def test_probe_reports_violating_witness():
    class Liar:
        dim = 2
        band = (2.0, 3.0)  # claims more ellipticity than it has

        def evaluate(self, M):
            return float(np.trace(M.mat))

    with pytest.raises(ff.EllipticityViolation) as err:
        ff.ellipticity_probe(Liar(), trials=50, seed=0)
    assert err.value.M is not None and err.value.N is not None


def test_probe_requires_trials():
    with pytest.raises(ValueError):
        ff.ellipticity_probe(ff.LinearOp(np.eye(2)), trials=0, seed=0)


# ------------------------------------------------- fundamental and dipole

def test_fundamental_examples():
    I3, I2 = ff.SymMatrix.identity(3), ff.SymMatrix.identity(2)
    assert ff.fundamental_value(I3, [2.0, 0.0, 0.0], 3) == pytest.approx(0.5, abs=1e-15)
    assert ff.fundamental_value(I2, [np.e, 0.0], 2) == pytest.approx(1.0, abs=1e-14)
    assert ff.fundamental_value(ff.SymMatrix.diag([0.25, 1.0]), [2.0, 0.0], 2) == pytest.approx(
        0.0, abs=1e-15
    )


def test_dipole_examples():
    I3, I2 = ff.SymMatrix.identity(3), ff.SymMatrix.identity(2)
    assert ff.dipole_value([1, 0, 0], I3, [2.0, 0.0, 0.0], 3) == pytest.approx(0.25, abs=1e-15)
    assert ff.dipole_value([0, 0, 0], I3, [1.3, -0.4, 2.0], 3) == 0.0
    assert ff.dipole_value([0, 1], I2, [3.0, 4.0], 2) == pytest.approx(4.0 / 25.0, abs=1e-15)


def test_singular_point_rejected():
    with pytest.raises(ValueError, match="singular"):
        ff.fundamental_value(ff.SymMatrix.identity(2), [0.0, 0.0], 2)
    with pytest.raises(ValueError, match="singular"):
        ff.dipole_value([1, 0], ff.SymMatrix.identity(2), [0.0, 0.0], 2)


@given(st.lists(st.floats(-5.0, 5.0), min_size=3, max_size=3))
@settings(max_examples=60, deadline=None)
def test_parity_under_reflection(x):
    x = np.asarray(x)
    if np.linalg.norm(x) < 1e-3:
        return
    minv = ff.SymMatrix.from_matrix(np.diag([1.0, 0.5, 2.0]))
    e = np.array([0.3, -1.0, 0.7])
    assert ff.fundamental_value(minv, x, 3) == pytest.approx(
        ff.fundamental_value(minv, -x, 3), rel=1e-12
    )
    assert ff.dipole_value(e, minv, x, 3) == pytest.approx(
        -ff.dipole_value(e, minv, -x, 3), rel=1e-12
    )


def test_identity_metric_reduces_to_radial():
    rng = np.random.default_rng(5)
    pts3 = rng.normal(size=(20, 3)) * 2.0 + 0.5
    r3 = np.linalg.norm(pts3, axis=1)
    assert np.allclose(
        ff.fundamental_values(ff.SymMatrix.identity(3), pts3, 3), r3 ** (-1.0), rtol=1e-13
    )
    pts2 = rng.normal(size=(20, 2)) * 2.0 + 0.5
    r2 = np.linalg.norm(pts2, axis=1)
    assert np.allclose(
        ff.fundamental_values(ff.SymMatrix.identity(2), pts2, 2), np.log(r2), atol=1e-13
    )


def test_metric_inverse_symmetrized_and_conditioned():
    m = ff.SymMatrix.from_matrix([[2.0, 0.3], [0.3, 0.9]])
    inv = ff.metric_inverse(m)
    assert np.allclose(inv.mat @ m.mat, np.eye(2), atol=1e-12)
    with pytest.raises(ff.MetricConditionError):
        ff.metric_inverse(ff.SymMatrix.diag([1.0, 1e-12]))
