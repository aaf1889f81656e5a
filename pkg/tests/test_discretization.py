import io

import numpy as np
import pytest

import farfield as ff
from farfield.discretization import CLASS_NAMES
from conftest import quadratic_fn


def random_quadratic(rng, dim):
    a = rng.normal(size=(dim, dim))
    A = 0.5 * (a + a.T)
    return A, quadratic_fn(A, rng.normal(size=dim), float(rng.normal()))


# ----------------------------------------------------------------- grids

def test_grid_validation():
    with pytest.raises(ValueError, match="multiple of h"):
        ff.AnnulusGrid(2, 1.1, 8.0, 0.25)
    with pytest.raises(ValueError, match="r_in must be >= h"):
        ff.AnnulusGrid(2, 0.0, 8.0, 0.5)
    with pytest.raises(ValueError, match="8 h"):
        ff.AnnulusGrid(2, 1.0, 4.0, 0.5)
    with pytest.raises(ValueError, match="dim"):
        ff.AnnulusGrid(4, 1.0, 8.0, 0.5)


def test_grid_partition_and_order():
    g = ff.AnnulusGrid(2, 1.0, 4.0, 0.25)
    assert g.interior_ids.size + g.inner_ids.size + g.outer_ids.size == g.n_nodes
    # lexicographic ordering by coordinates
    order = np.lexsort(g.lattice.T[::-1])
    assert np.array_equal(order, np.arange(g.n_nodes))
    # boundary nodes sit exactly on the two box surfaces
    cheb = np.abs(g.lattice).max(axis=1)
    assert np.all(cheb[g.inner_ids] == g.k_in)
    assert np.all(cheb[g.outer_ids] == g.k_out)
    assert cheb.min() >= g.k_in


def test_grid_excises_inner_box():
    g = ff.AnnulusGrid(2, 1.0, 5.0, 0.5)
    with pytest.raises(KeyError):
        g.node_id((0, 0))
    with pytest.raises(KeyError):
        g.node_id((11, 0))
    assert g.classes[g.node_id((2, 0))] == 1  # inner boundary
    assert g.classes[g.node_id((10, 3))] == 2  # outer boundary


@pytest.mark.parametrize("dim,h", [(2, 0.5), (2, 0.25), (3, 0.5)])
def test_stencil_exact_on_quadratics(dim, h):
    rng = np.random.default_rng(17)
    g = ff.AnnulusGrid(dim, 1.0, 1.0 + 8 * h if dim == 3 else 5.0, h)
    A, fn = random_quadratic(rng, dim)
    f = ff.Field.from_function(g, fn)
    H = ff.interior_hessians(f)
    assert np.abs(H - A).max() <= 1e-10


def test_hessian_at_matches_bulk_and_symmetry():
    g = ff.AnnulusGrid(2, 1.0, 4.0, 0.25)
    rng = np.random.default_rng(3)
    f = ff.Field(g, rng.normal(size=g.n_nodes))
    H = ff.interior_hessians(f)
    for row, nid in enumerate(g.interior_ids[::97]):
        Hn = ff.hessian_at(f, int(nid)).mat
        assert np.array_equal(Hn, Hn.T)
        assert np.allclose(Hn, H[g.interior_pos[nid]], rtol=0, atol=0)


def test_hessian_refinement_on_radial_n3():
    # error at a fixed physical node drops ~4x per halving
    fn = lambda pts: 1.0 / np.linalg.norm(np.atleast_2d(pts), axis=1)
    errs = []
    for h in (0.5, 0.25):
        g = ff.AnnulusGrid(3, 1.0, 6.0, h)
        f = ff.Field.from_function(g, fn)
        nid = g.node_id((int(4 / h), 0, 0))
        x = g.coords[nid]
        r = np.linalg.norm(x)
        exact = (3.0 * np.outer(x, x) / r**2 - np.eye(3)) / r**3
        errs.append(np.abs(ff.hessian_at(f, nid).mat - exact).max())
    ratio = errs[0] / errs[1]
    assert 3.2 <= ratio <= 4.8


def test_hessian_constant_field_and_boundary_rejection():
    g = ff.AnnulusGrid(2, 1.0, 5.0, 0.5)
    f = ff.Field(g, np.full(g.n_nodes, 3.7))
    assert np.abs(ff.interior_hessians(f)).max() <= 1e-12
    with pytest.raises(ValueError, match="boundary node"):
        ff.hessian_at(f, int(g.inner_ids[0]))


def test_translation_by_linear_function_invariance():
    g = ff.AnnulusGrid(2, 1.0, 4.0, 0.25)
    rng = np.random.default_rng(11)
    f = ff.Field(g, rng.normal(size=g.n_nodes))
    shift = g.coords @ np.array([1.7, -0.4]) + 2.0
    g2 = ff.Field(g, f.values + shift)
    assert np.abs(ff.interior_hessians(g2) - ff.interior_hessians(f)).max() <= 1e-9


# -------------------------------------------------------------- residuals

def test_residual_constant_shift(planted2):
    op = ff.LinearOp(planted2.op_matrix)
    g = ff.AnnulusGrid(2, 1.0, 4.0, 0.25)
    # quadratic with tr(B A) = 0 -> residual 0; shifted A -> constant residual
    f0 = ff.Field.from_function(g, quadratic_fn(planted2.quad.mat))
    assert np.abs(ff.assemble_residual(op, f0)).max() <= 1e-10
    A_shift = planted2.quad.mat + 0.5 * np.linalg.inv(planted2.op_matrix.mat) / 2
    s = float(np.sum(planted2.op_matrix.mat * (A_shift - planted2.quad.mat)))
    f1 = ff.Field.from_function(g, quadratic_fn(A_shift))
    res = ff.assemble_residual(op, f1)
    assert np.abs(res - s).max() <= 1e-10


def test_residual_on_planted_is_second_order(planted2):
    # measured on a fixed region away from the inner boundary, where the
    # planted solution's fourth derivatives are uniformly bounded
    op = ff.LinearOp(planted2.op_matrix)
    errs = []
    for h in (0.25, 0.125):
        g = ff.AnnulusGrid(2, 1.0, 4.0, h)
        f = ff.Field.from_function(g, planted2.values)
        res = ff.assemble_residual(op, f)
        far = np.linalg.norm(g.coords[g.interior_ids], axis=1) >= 2.0
        errs.append(np.abs(res[far]).max())
    assert errs[0] / errs[1] >= 3.2


def test_residual_overflow_names_node():
    g = ff.AnnulusGrid(2, 1.0, 5.0, 0.5)
    vals = np.zeros(g.n_nodes)
    vals[g.interior_ids[0]] = 1e308
    vals[g.interior_ids[5]] = -1e308
    f = ff.Field(g, vals)
    with pytest.raises(ff.AssemblyError, match="non-finite Hessian at node"):
        ff.assemble_residual(ff.LinearOp(np.eye(2)), f)


def test_non_finite_field_rejected():
    g = ff.AnnulusGrid(2, 1.0, 5.0, 0.5)
    vals = np.zeros(g.n_nodes)
    vals[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        ff.Field(g, vals)


# -------------------------------------------------------- boundary / CSV

def test_impose_boundary(planted2):
    g = ff.AnnulusGrid(2, 1.0, 5.0, 0.5)
    f = ff.Field.zeros(g)
    z = ff.impose_boundary(f, lambda pts: np.zeros(len(np.atleast_2d(pts))))
    assert np.abs(z.values).max() == 0.0
    pb = ff.impose_boundary(f, planted2.values)
    expect = planted2.values(g.coords[g.boundary_ids])
    assert np.array_equal(pb.values[g.boundary_ids], expect)
    assert np.abs(pb.values[g.interior_ids]).max() == 0.0
    with pytest.raises(ValueError, match="non-finite"):
        ff.impose_boundary(f, lambda pts: np.full(len(np.atleast_2d(pts)), np.nan))


def test_field_csv_roundtrip(tmp_path):
    g = ff.AnnulusGrid(2, 1.0, 5.0, 0.5)
    rng = np.random.default_rng(2)
    f = ff.Field(g, rng.normal(size=g.n_nodes))
    path = tmp_path / "field.csv"
    f.write_csv(path)
    text = path.read_text().splitlines()
    assert text[0] == "x1,x2,class,value,field-v1"
    back = ff.Field.read_csv(g, path)
    assert np.array_equal(back.values, f.values)
    classes = {line.split(",")[2] for line in text[1:]}
    assert classes == set(CLASS_NAMES)
