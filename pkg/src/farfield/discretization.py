"""Exterior-domain Cartesian grids, discrete Hessians, residual assembly.

The domain is a box annulus: the cube of half-width r_out with the open
inner box of half-width r_in excised.  Both half-widths must sit on grid
lines, so boundary nodes are exact lattice points and no interpolation
is involved.  Nodes are ordered lexicographically by coordinates; every
reduction in the package follows that order, which is what makes reruns
bit-identical.
"""

from __future__ import annotations

import csv

import numpy as np

from .operators import EllipticOperator, SymMatrix
from .csvio import SCHEMA_FIELD, format_float, open_csv_writer

__all__ = [
    "AnnulusGrid",
    "Field",
    "AssemblyError",
    "CLASS_NAMES",
    "hessian_at",
    "interior_hessians",
    "assemble_residual",
    "impose_boundary",
]

CLASS_INTERIOR, CLASS_INNER, CLASS_OUTER = 0, 1, 2
CLASS_NAMES = ("interior", "inner_boundary", "outer_boundary")


def _aligned_steps(r: float, h: float, name: str) -> int:
    k = int(round(r / h))
    if abs(k * h - r) > 1e-9 * max(1.0, abs(r)):
        raise ValueError(f"{name} = {r} is not an integer multiple of h = {h}")
    return k


class AnnulusGrid:
    """Box-annulus lattice with nodes classified interior / inner / outer.

    Invariants: r_in >= h and r_out >= r_in + 8 h (both snapped to grid
    lines); every interior node carries the full 9-point (dim 2) or
    19-point (dim 3) Hessian stencil inside the grid, which the box
    geometry guarantees by construction.
    """

    def __init__(self, dim: int, r_in: float, r_out: float, h: float):
        if dim not in (2, 3):
            raise ValueError(f"grid dim must be 2 or 3, got {dim}")
        if h <= 0.0:
            raise ValueError("h must be positive")
        k_in = _aligned_steps(r_in, h, "r_in")
        k_out = _aligned_steps(r_out, h, "r_out")
        if k_in < 1:
            raise ValueError(f"r_in must be >= h (got r_in = {r_in}, h = {h})")
        if k_out < k_in + 8:
            raise ValueError(
                f"r_out must be >= r_in + 8 h (got r_out = {r_out}, r_in = {r_in}, h = {h})"
            )
        self.dim = dim
        self.h = float(h)
        self.r_in = k_in * self.h
        self.r_out = k_out * self.h
        self.k_in = k_in
        self.k_out = k_out

        axes = [np.arange(-k_out, k_out + 1, dtype=np.int32)] * dim
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([m.reshape(-1) for m in mesh], axis=1)  # lexicographic
        cheb = np.abs(lattice).max(axis=1)
        keep = cheb >= k_in
        self.lattice = np.ascontiguousarray(lattice[keep])
        cheb = cheb[keep]
        self.coords = self.lattice.astype(float) * self.h
        self.classes = np.full(self.lattice.shape[0], CLASS_INTERIOR, dtype=np.uint8)
        self.classes[cheb == k_in] = CLASS_INNER
        self.classes[cheb == k_out] = CLASS_OUTER

        side = 2 * k_out + 1
        lookup = np.full((side,) * dim, -1, dtype=np.int64)
        lookup[tuple((self.lattice + k_out).T)] = np.arange(self.lattice.shape[0])
        self._lookup = lookup

        self.interior_ids = np.flatnonzero(self.classes == CLASS_INTERIOR)
        self.inner_ids = np.flatnonzero(self.classes == CLASS_INNER)
        self.outer_ids = np.flatnonzero(self.classes == CLASS_OUTER)
        self.boundary_ids = np.flatnonzero(self.classes != CLASS_INTERIOR)

        # interior row index per node id (-1 on boundary)
        self.interior_pos = np.full(self.n_nodes, -1, dtype=np.int64)
        self.interior_pos[self.interior_ids] = np.arange(self.interior_ids.size)

        self.offsets = self._hessian_offsets(dim)
        nb = np.empty((self.interior_ids.size, len(self.offsets)), dtype=np.int64)
        base = self.lattice[self.interior_ids]
        for c, off in enumerate(self.offsets):
            nb[:, c] = lookup[tuple((base + off + k_out).T)]
        if nb.min() < 0:
            raise AssertionError("interior stencil left the grid; geometry bug")
        self.neighbors = nb

    @staticmethod
    def _hessian_offsets(dim: int):
        offs = []
        for i in range(dim):
            for s in (1, -1):
                o = np.zeros(dim, dtype=np.int32)
                o[i] = s
                offs.append(o)
        for i in range(dim):
            for j in range(i + 1, dim):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    o = np.zeros(dim, dtype=np.int32)
                    o[i], o[j] = si, sj
                    offs.append(o)
        return offs

    @property
    def n_nodes(self) -> int:
        return self.lattice.shape[0]

    @property
    def pairs(self):
        d = self.dim
        return [(i, j) for i in range(d) for j in range(i + 1, d)]

    def node_id(self, lattice_point) -> int:
        lp = np.asarray(lattice_point, dtype=np.int64)
        if lp.shape != (self.dim,) or np.abs(lp).max() > self.k_out:
            raise KeyError(f"lattice point {lattice_point} outside the grid")
        nid = int(self._lookup[tuple(lp + self.k_out)])
        if nid < 0:
            raise KeyError(f"lattice point {lattice_point} is excised")
        return nid

    def shell_ids(self, radius: float, width: float | None = None) -> np.ndarray:
        """Interior node ids with Euclidean radius in [radius - w/2, radius + w/2)."""
        w = self.h if width is None else float(width)
        r = np.linalg.norm(self.coords[self.interior_ids], axis=1)
        mask = (r >= radius - 0.5 * w) & (r < radius + 0.5 * w)
        return self.interior_ids[mask]

    def __repr__(self):
        return (
            f"AnnulusGrid(dim={self.dim}, r_in={self.r_in}, r_out={self.r_out}, "
            f"h={self.h}, nodes={self.n_nodes})"
        )


class Field:
    """One real value per grid node; rejects non-finite data."""

    def __init__(self, grid: AnnulusGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_nodes,):
            raise ValueError(
                f"value count {values.shape} does not match node count {grid.n_nodes}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite value at node {grid.lattice[bad].tolist()}")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: AnnulusGrid, fn) -> "Field":
        from .findiff import eval_points

        return cls(grid, eval_points(fn, grid.coords))

    @classmethod
    def zeros(cls, grid: AnnulusGrid) -> "Field":
        return cls(grid, np.zeros(grid.n_nodes))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def write_csv(self, path_or_file) -> None:
        g = self.grid
        cols = [f"x{i + 1}" for i in range(g.dim)] + ["class", "value"]
        with open_csv_writer(path_or_file, cols, SCHEMA_FIELD) as writer:
            for i in range(g.n_nodes):
                row = [format_float(c) for c in g.coords[i]]
                row.append(CLASS_NAMES[g.classes[i]])
                row.append(format_float(self.values[i]))
                writer(row)

    @classmethod
    def read_csv(cls, grid: AnnulusGrid, path) -> "Field":
        with open(path, "r", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if len(body) != grid.n_nodes:
            raise ValueError(
                f"file has {len(body)} rows, grid has {grid.n_nodes} nodes"
            )
        vals = np.empty(grid.n_nodes)
        for i, row in enumerate(body):
            xs = np.array([float(v) for v in row[: grid.dim]])
            if np.abs(xs - grid.coords[i]).max() > 1e-12 * max(1.0, grid.r_out):
                raise ValueError(f"row {i} coordinates do not match the grid")
            vals[i] = float(row[grid.dim + 1])
        return cls(grid, vals)


class AssemblyError(RuntimeError):
    """Residual assembly hit a non-finite Hessian; carries the node."""

    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


def interior_hessians(field: Field) -> np.ndarray:
    """Stencil Hessians at all interior nodes, shape (n_interior, dim, dim).

    Central second differences on the diagonal, symmetric 4-point cross
    differences off it; exact on quadratics up to round-off.
    """
    g = field.grid
    v = field.values
    nb = g.neighbors
    d = g.dim
    h2 = g.h * g.h
    center = v[g.interior_ids]
    H = np.empty((center.size, d, d))
    for i in range(d):
        H[:, i, i] = (v[nb[:, 2 * i]] + v[nb[:, 2 * i + 1]] - 2.0 * center) / h2
    base = 2 * d
    for k, (i, j) in enumerate(g.pairs):
        cols = nb[:, base + 4 * k : base + 4 * k + 4]
        cross = (v[cols[:, 0]] - v[cols[:, 1]] - v[cols[:, 2]] + v[cols[:, 3]]) / (4.0 * h2)
        H[:, i, j] = cross
        H[:, j, i] = cross
    return H


def hessian_at(field: Field, node: int) -> SymMatrix:
    """Stencil Hessian at one interior node (by node id)."""
    g = field.grid
    pos = g.interior_pos[node]
    if pos < 0:
        raise ValueError(
            f"node {g.lattice[node].tolist()} is a boundary node; Hessian undefined"
        )
    v = field.values
    nb = g.neighbors[pos]
    d = g.dim
    h2 = g.h * g.h
    c = v[node]
    H = np.empty((d, d))
    for i in range(d):
        H[i, i] = (v[nb[2 * i]] + v[nb[2 * i + 1]] - 2.0 * c) / h2
    base = 2 * d
    for k, (i, j) in enumerate(g.pairs):
        cols = nb[base + 4 * k : base + 4 * k + 4]
        H[i, j] = H[j, i] = (v[cols[0]] - v[cols[1]] - v[cols[2]] + v[cols[3]]) / (4.0 * h2)
    return SymMatrix.from_matrix(H, tol=1e-6)


def assemble_residual(op: EllipticOperator, field: Field) -> np.ndarray:
    """Operator residual at every interior node, in lexicographic node order."""
    g = field.grid
    with np.errstate(over="ignore", invalid="ignore"):
        H = interior_hessians(field)
    finite = np.isfinite(H).all(axis=(1, 2))
    if not finite.all():
        bad = g.interior_ids[int(np.flatnonzero(~finite)[0])]
        raise AssemblyError(
            f"non-finite Hessian at node {g.lattice[bad].tolist()}",
            node=g.lattice[bad].tolist(),
        )
    return op.evaluate_many(H)


def impose_boundary(field: Field, g) -> Field:
    """New field with boundary values overwritten by g; interior untouched."""
    from .findiff import eval_points

    grid = field.grid
    bvals = eval_points(g, grid.coords[grid.boundary_ids])
    if not np.all(np.isfinite(bvals)):
        bad = grid.boundary_ids[int(np.flatnonzero(~np.isfinite(bvals))[0])]
        raise ValueError(f"boundary data non-finite at node {grid.lattice[bad].tolist()}")
    out = field.values.copy()
    out[grid.boundary_ids] = bvals
    return Field(grid, out)
