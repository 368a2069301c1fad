"""Harmonic flattening of a disk-topology mesh with a fixed boundary."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .mesh import Mesh, TopologyReport

MIN_WEIGHT = 1e-6
DENSE_LIMIT = 500
RESIDUAL_TOL = 1e-10


@dataclass
class UVEmbedding:
    """Planar coordinates for every vertex of a mesh.

    ``frame`` is ``"disk"`` for the unit-circle initialization and
    ``"square"`` for maps living on [0, 1]^2.
    """

    uv: np.ndarray
    frame: str = "square"
    source_n: int | None = None

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=np.float64)
        if self.uv.ndim != 2 or self.uv.shape[1] != 2:
            raise ValueError("uv must have shape (n, 2)")
        if self.frame not in ("disk", "square"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.source_n is None:
            self.source_n = self.uv.shape[0]
        if self.source_n != self.uv.shape[0]:
            raise ValueError("source_n does not match number of uv rows")
        if not np.isfinite(self.uv).all():
            raise ValueError("uv contains non-finite values")

    @property
    def n(self) -> int:
        return self.uv.shape[0]

    def check_mesh(self, mesh: Mesh) -> None:
        if self.n != mesh.n_vertices:
            raise ValueError(f"embedding has {self.n} vertices, mesh has {mesh.n_vertices}")

    def to_square(self) -> "UVEmbedding":
        """Affine map of the disk frame [-1, 1]^2 onto [0, 1]^2."""
        if self.frame == "square":
            return UVEmbedding(self.uv.copy(), "square")
        return UVEmbedding((self.uv + 1.0) * 0.5, "square")


def cotangent_weights(mesh: Mesh, min_weight: float = MIN_WEIGHT) -> sparse.csr_matrix:
    """Symmetric edge weights (cot a + cot b) / 2, negatives clamped to ``min_weight``."""
    v = mesh.vertices
    t = mesh.triangles
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        a = v[i] - v[o]
        b = v[j] - v[o]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = np.where(cross > 0, dot / cross, 0.0)
        rows += [i, j]
        cols += [j, i]
        vals += [0.5 * cot, 0.5 * cot]
    n = mesh.n_vertices
    W = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    W.sum_duplicates()
    W.data = np.maximum(W.data, min_weight)
    return W


def boundary_to_circle(report: TopologyReport, mesh: Mesh, start: int | None = None,
                       phase: float = 0.0) -> dict[int, np.ndarray]:
    """Place the outer boundary loop on the unit circle by 3D arc length.

    The loop's first vertex (or ``start``, if given) sits at angle ``phase``;
    the rest follow counter-clockwise.
    """
    if report.boundary_loops != 1:
        raise ValueError(f"expected exactly one boundary loop, found {report.boundary_loops}")
    loop = list(report.boundary_vertices)
    if start is not None:
        if start not in loop:
            raise ValueError(f"start vertex {start} is not on the boundary loop")
        k = loop.index(start)
        loop = loop[k:] + loop[:k]
    p = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    total = seg.sum()
    if not total > 0:
        raise ValueError("boundary loop has zero length")
    s = np.concatenate([[0.0], np.cumsum(seg[:-1])]) / total
    theta = phase + 2.0 * np.pi * s
    return {int(vi): np.array([np.cos(a), np.sin(a)]) for vi, a in zip(loop, theta)}


def solve_harmonic(mesh: Mesh, boundary: Mapping[int, np.ndarray], method: str = "auto",
                   min_weight: float = MIN_WEIGHT) -> UVEmbedding:
    """Solve the cotangent Laplace equation for interior uv with fixed boundary.

    ``method`` is ``"sparse"``, ``"dense"`` or ``"auto"`` (dense below
    ``DENSE_LIMIT`` unknowns).
    """
    n = mesh.n_vertices
    fixed = np.array(sorted(boundary), dtype=np.int64)
    if fixed.size == 0:
        raise ValueError("no boundary positions given")
    if fixed.min() < 0 or fixed.max() >= n:
        raise IndexError("boundary vertex index out of range")
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed] = True
    free = np.flatnonzero(~is_fixed)
    if free.size == 0:
        raise ValueError("mesh has no interior vertices")

    W = cotangent_weights(mesh, min_weight)
    _check_reaches_boundary(W, is_fixed)
    L = (sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()

    uv = np.zeros((n, 2))
    uv[fixed] = np.array([boundary[int(i)] for i in fixed], dtype=np.float64)
    L_ff = L[free][:, free]
    rhs = -(L[free][:, fixed] @ uv[fixed])

    if method == "auto":
        method = "dense" if free.size < DENSE_LIMIT else "sparse"
    if method == "dense":
        sol = np.linalg.solve(L_ff.toarray(), rhs)
    elif method == "sparse":
        sol = spsolve(L_ff.tocsc(), rhs)
    else:
        raise ValueError(f"unknown method {method!r}")
    sol = np.asarray(sol).reshape(-1, 2)
    uv[free] = sol

    # residual of the weighted-average form, per coordinate
    deg = np.asarray(W.sum(axis=1)).ravel()[free]
    resid = np.abs((L[free] @ uv) / deg[:, None]).max()
    if not resid < RESIDUAL_TOL:
        raise np.linalg.LinAlgError(f"harmonic solve residual {resid:.3e} exceeds {RESIDUAL_TOL}")
    return UVEmbedding(uv, "disk")


def _check_reaches_boundary(W: sparse.csr_matrix, is_fixed: np.ndarray) -> None:
    n_comp, labels = csgraph.connected_components(W, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[labels[is_fixed]] = True
    if not anchored.all():
        orphan = int(np.flatnonzero(~anchored[labels])[0])
        raise np.linalg.LinAlgError(
            f"singular system: vertex {orphan} is not connected to any fixed vertex")


def signed_areas(uv: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = uv[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def check_flips(uv: UVEmbedding, mesh: Mesh) -> int:
    """Number of triangles whose signed uv area is not positive."""
    uv.check_mesh(mesh)
    return int((signed_areas(uv.uv, mesh.triangles) <= 0).sum())
