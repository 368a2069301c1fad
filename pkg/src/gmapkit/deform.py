"""Deform a harmonic initialization into the square, symmetric geometric map.

Each pass fits a rigid motion from every 3D one-ring onto its current planar
image, predicts where the centre vertex should go, smooths the resulting
offsets with a graph-Laplacian penalty and moves the free vertices. Key
vertices (boundary, central axis, mirrored landmarks) stay pinned at their
rearranged targets.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .harmonic import UVEmbedding, check_flips, solve_harmonic
from .mesh import Mesh, TopologyReport, face_normals
from .rigid import RigidFit, _kabsch_batch, kabsch

log = logging.getLogger(__name__)

SQUARE_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class SpecError(ValueError):
    """Invalid key-vertex document; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class KeyVertexSpec:
    landmark_pairs: list[tuple[int, int, float, float]]
    axis_vertices: list[int]
    corner_assignment: list[int]
    edge_vertices: list[int] = field(default_factory=list)

    @classmethod
    def from_document(cls, doc: Mapping, report: TopologyReport | None = None) -> "KeyVertexSpec":
        """Build from the JSON layout; edge vertices come from the boundary loop."""
        try:
            pairs = [(int(p[0]), int(p[1]), float(p[2]), float(p[3])) for p in doc.get("landmark_pairs", [])]
        except (TypeError, IndexError, ValueError):
            raise SpecError("landmark_pairs", "entries must be [left, right, tx, ty]") from None
        axis = [int(a) for a in doc.get("axis", [])]
        corners = [int(c) for c in doc.get("corners", [])]
        edges: list[int] = []
        if report is not None:
            edges = list(report.boundary_vertices)
            start = doc.get("boundary_start")
            if start is not None and int(start) in edges:
                k = edges.index(int(start))
                edges = edges[k:] + edges[:k]
        return cls(pairs, axis, corners, edges)

    @classmethod
    def load(cls, path, report: TopologyReport | None = None) -> "KeyVertexSpec":
        return cls.from_document(json.loads(Path(path).read_text(encoding="utf-8")), report)

    def to_document(self) -> dict:
        return {
            "landmark_pairs": [[l, r, tx, ty] for l, r, tx, ty in self.landmark_pairs],
            "axis": list(self.axis_vertices),
            "corners": list(self.corner_assignment),
        }

    def validate(self, n_vertices: int) -> None:
        def check_range(name, idx):
            for i in idx:
                if not 0 <= i < n_vertices:
                    raise SpecError(name, f"vertex index {i} outside [0, {n_vertices})")

        check_range("landmark_pairs", [i for p in self.landmark_pairs for i in p[:2]])
        check_range("axis", self.axis_vertices)
        check_range("corners", self.corner_assignment)
        check_range("edges", self.edge_vertices)
        if len(self.corner_assignment) != 4:
            raise SpecError("corners", "exactly 4 corner vertices are required")
        if len(set(self.corner_assignment)) != 4:
            raise SpecError("corners", "corner vertices must be distinct")
        for l, r, tx, ty in self.landmark_pairs:
            if l == r:
                raise SpecError("landmark_pairs", f"pair ({l}, {r}) has identical members")
            if not (0.0 <= tx <= 1.0 and 0.0 <= ty <= 1.0):
                raise SpecError("landmark_pairs", f"target ({tx}, {ty}) lies outside [0, 1]^2")
        pair_members = [i for p in self.landmark_pairs for i in p[:2]]
        roles = {"landmark_pairs": pair_members, "axis": self.axis_vertices,
                 "edges": self.edge_vertices}
        seen: dict[int, str] = {}
        for name, idx in roles.items():
            for i in idx:
                if i in seen:
                    raise SpecError(name, f"vertex {i} already used as {seen[i]}")
                seen[i] = name
        if self.edge_vertices:
            on_loop = set(self.edge_vertices)
            for c in self.corner_assignment:
                if c not in on_loop:
                    raise SpecError("corners", f"vertex {c} is not on the boundary loop")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(l, r) for l, r, _, _ in self.landmark_pairs]


@dataclass
class DeformParams:
    max_iterations: int = 200
    convergence_threshold: float = 1e-5
    log_every: int = 10
    method: str = "energy"
    # multiplies the 3D template before the rigid fits; None = unit surface area
    source_scale: float | None = None
    # start free vertices from a harmonic solve against the key-vertex targets
    warm_start: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_threshold > 0:
            raise ValueError("convergence_threshold must be > 0")


@dataclass
class DeformResult:
    embedding: UVEmbedding
    converged: bool
    iterations: int
    log: list[dict]
    targets: dict[int, np.ndarray]
    flips: int


def rearrange_key_vertices(uv: UVEmbedding, spec: KeyVertexSpec,
                           mesh: Mesh | None = None) -> dict[int, np.ndarray]:
    """Square/symmetric targets for every key vertex.

    Boundary vertices go onto the unit-square perimeter, spaced by their
    initial uv arc length between the pinned corners (corner 0 at (0, 0),
    then counter-clockwise). Axis vertices move onto x = 0.5 in the order of
    their initial height; with ``mesh`` given, the ones between the lowest
    and highest are re-spaced by 3D arc length along that ordering, otherwise
    they keep their initial height. Each right landmark mirrors its left
    partner's target.
    """
    sq = uv.to_square().uv
    targets: dict[int, np.ndarray] = {}

    if spec.edge_vertices:
        loop = list(spec.edge_vertices)
        try:
            pos = [loop.index(c) for c in spec.corner_assignment]
        except ValueError:
            bad = next(c for c in spec.corner_assignment if c not in loop)
            raise SpecError("corners", f"vertex {bad} is not on the boundary loop") from None
        k0 = pos[0]
        loop = loop[k0:] + loop[:k0]
        pos = [(p - k0) % len(loop) for p in pos]
        if not pos[0] < pos[1] < pos[2] < pos[3]:
            raise SpecError("corners", "corners are not in counter-clockwise boundary order")
        bounds = pos + [len(loop)]
        closed = loop + [loop[0]]
        for side in range(4):
            seg = closed[bounds[side]:bounds[side + 1] + 1]
            p = sq[seg]
            arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
            if arc[-1] <= 0:
                raise SpecError("corners", f"side {side} has zero length in the initial embedding")
            frac = arc / arc[-1]
            a, b = SQUARE_CORNERS[side], SQUARE_CORNERS[(side + 1) % 4]
            for vtx, f in zip(seg[:-1], frac[:-1]):
                targets[int(vtx)] = a + f * (b - a)
        for c, corner in zip(spec.corner_assignment, SQUARE_CORNERS):
            targets[int(c)] = corner.copy()

    axis = sorted((int(a) for a in spec.axis_vertices), key=lambda a: (sq[a, 1], a))
    heights = sq[axis, 1] if axis else np.zeros(0)
    if mesh is not None and len(axis) > 2:
        p = mesh.vertices[axis]
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
        if arc[-1] > 0:
            heights = heights[0] + (heights[-1] - heights[0]) * arc / arc[-1]
    for a, y in zip(axis, heights):
        targets[a] = np.array([0.5, y])

    for l, r, tx, ty in spec.landmark_pairs:
        targets[int(l)] = np.array([tx, ty])
        targets[int(r)] = np.array([1.0 - tx, ty])
    return targets


def _lift(uv: np.ndarray) -> np.ndarray:
    return np.column_stack([uv, np.zeros(len(uv))])


def local_rigid_fit(source_ring, target_ring) -> RigidFit:
    """Rigid motion taking a 3D ring onto its planar image (lifted to z=0)."""
    src = np.asarray(source_ring, dtype=np.float64)
    dst = np.asarray(target_ring, dtype=np.float64)
    if dst.ndim == 2 and dst.shape[1] == 2:
        dst = _lift(dst)
    if len(src) < 3:
        raise ValueError(f"ring size {len(src)} < 3")
    return kabsch(src, dst)


def area_scale(mesh: Mesh) -> float:
    """Factor that gives the mesh unit surface area (the area of the square map)."""
    area = 0.5 * np.linalg.norm(face_normals(mesh.vertices, mesh.triangles), axis=1).sum()
    if not area > 0:
        raise ValueError("mesh has zero surface area")
    return float(1.0 / np.sqrt(area))


def predict_positions(mesh: Mesh, uv: UVEmbedding, indices: Iterable[int] | None = None,
                      return_residuals: bool = False, scale: float = 1.0):
    """Rigidly transported position R_i v_i + T_i for each requested vertex.

    Rows not in ``indices`` are copied from the lifted embedding. With
    ``return_residuals`` the largest ring-point misfit of each fit is
    returned as well.
    ``scale`` multiplies the 3D positions first, bringing them to uv units.
    """
    uv.check_mesh(mesh)
    n = mesh.n_vertices
    idx = np.arange(n) if indices is None else np.asarray(list(indices), dtype=np.int64)
    V = mesh.vertices * scale
    base = _lift(uv.uv)
    # fits read the untouched embedding; predictions go to a separate array
    P = base.copy()
    resid = np.zeros(n)
    rings = mesh.adjacency
    sizes = np.array([len(rings[i]) for i in idx], dtype=np.int64)
    if (sizes < 3).any():
        bad = int(idx[np.flatnonzero(sizes < 3)[0]])
        raise ValueError(f"vertex {bad} has a ring of size {len(rings[bad])} < 3")
    for k in np.unique(sizes):
        group = idx[sizes == k]
        ring_idx = np.stack([rings[i] for i in group])
        src = V[ring_idx]
        dst = base[ring_idx]
        R, T, _ = _kabsch_batch(src, dst)
        P[group] = np.einsum("bij,bj->bi", R, V[group]) + T
        if return_residuals:
            moved = np.einsum("bij,bkj->bki", R, src) + T[:, None, :]
            resid[group] = np.linalg.norm(moved - dst, axis=2).max(axis=1)
    return (P, resid) if return_residuals else P


def smoothing_matrix(mesh: Mesh) -> sparse.csr_matrix:
    """Graph matrix with 1 + 2 N_i on the diagonal and -2 for ring neighbours."""
    n = mesh.n_vertices
    e = mesh.edges
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    off = sparse.coo_matrix((np.full(len(rows), -2.0), (rows, cols)), shape=(n, n))
    diag = sparse.diags(1.0 + 2.0 * mesh.valences())
    return (diag + off).tocsr()


class OffsetSmoother:
    """Factorized offset-smoothing solve for a fixed mesh and fixed vertex set.

    ``method="energy"`` minimizes the data + smoothness objective with the
    fixed offsets held at zero, i.e. solves A[F, F] O_F = B_F.
    ``method="normal_equations"`` keeps every row of A, drops the fixed
    columns and solves the least-squares normal equations
    A[:, F]^T A[:, F] O_F = A[:, F]^T B.
    """

    def __init__(self, mesh: Mesh, fixed: Iterable[int], method: str = "energy"):
        n = mesh.n_vertices
        fixed = np.unique(np.asarray(list(fixed), dtype=np.int64))
        if fixed.size == 0:
            raise ValueError("fixed vertex set is empty; offsets are translation-degenerate")
        is_fixed = np.zeros(n, dtype=bool)
        is_fixed[fixed] = True
        self.n = n
        self.fixed = fixed
        self.free = np.flatnonzero(~is_fixed)
        self.method = method
        self.A = smoothing_matrix(mesh)
        A_F = self.A[:, self.free]
        if method == "energy":
            self.M = A_F[self.free].tocsc()
        elif method == "normal_equations":
            self.A_F = A_F.tocsr()
            self.M = (A_F.T @ A_F).tocsc()
        else:
            raise ValueError(f"unknown method {method!r}")
        try:
            self._lu = splu(self.M)
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"singular smoothing system: {exc}") from None

    def solve(self, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=np.float64)
        if B.shape[0] != self.n:
            raise ValueError("B must have one row per vertex")
        rhs = B[self.free] if self.method == "energy" else self.A_F.T @ B
        O = np.zeros_like(B)
        O[self.free] = self._lu.solve(np.ascontiguousarray(rhs))
        return O


def smooth_offsets(mesh: Mesh, uv: UVEmbedding, predicted: np.ndarray, fixed: Iterable[int],
                   method: str = "energy") -> np.ndarray:
    """Smoothed 3D offsets moving the lifted embedding toward ``predicted``.

    Returns an (n, 3) array whose fixed rows are zero.
    """
    uv.check_mesh(mesh)
    B = np.asarray(predicted, dtype=np.float64) - _lift(uv.uv)
    return OffsetSmoother(mesh, fixed, method).solve(B)


def symmetry_error(uv: UVEmbedding, pairs, axis) -> float:
    """Largest deviation from mirror symmetry about u = 0.5.

    ``pairs`` holds (left, right[, ...]) entries; the axis term is |u - 0.5|.
    """
    x = uv.uv
    worst = 0.0
    for p in pairs:
        l, r = int(p[0]), int(p[1])
        # x_l + x_r - 1 rather than x_l - (1 - x_r): exact zero for mirrored targets
        du = x[l, 0] + x[r, 0] - 1.0
        dv = x[l, 1] - x[r, 1]
        worst = max(worst, float(np.hypot(du, dv)))
    for a in axis:
        worst = max(worst, abs(float(x[int(a), 0]) - 0.5))
    return worst


def deform_to_gmap(mesh: Mesh, uv: UVEmbedding, spec: KeyVertexSpec,
                   params: DeformParams | None = None) -> DeformResult:
    """Iterate local rigid fits and smoothed offsets until the mean offset is small."""
    params = params or DeformParams()
    uv.check_mesh(mesh)
    spec.validate(mesh.n_vertices)
    flips = check_flips(uv, mesh)
    if flips:
        raise ValueError(f"input embedding has {flips} flipped triangles")

    targets = rearrange_key_vertices(uv, spec, mesh)
    fixed = np.array(sorted(targets), dtype=np.int64)
    cur = uv.to_square().uv.copy()
    cur[fixed] = np.array([targets[int(i)] for i in fixed])
    if params.warm_start and len(fixed) < mesh.n_vertices:
        try:
            warm = solve_harmonic(mesh, targets).uv
        except np.linalg.LinAlgError:
            warm = None
        if warm is not None and check_flips(UVEmbedding(warm, "square"), mesh) == 0:
            cur = warm.copy()
            cur[fixed] = np.array([targets[int(i)] for i in fixed])
        else:
            log.info("warm start rejected; using the transferred initial embedding")
    pinned = cur[fixed].copy()

    scale = area_scale(mesh) if params.source_scale is None else params.source_scale
    smoother = OffsetSmoother(mesh, fixed, params.method)
    free = smoother.free
    history: list[dict] = []
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        emb = UVEmbedding(cur, "square")
        P = predict_positions(mesh, emb, indices=None if params.method != "energy" else free,
                              scale=scale)
        O = smoother.solve(P - _lift(cur))
        step = O[free, :2]
        cur[free] += step
        norms = np.linalg.norm(step, axis=1)
        entry = {"iteration": it, "mean_offset": float(norms.mean()), "max_offset": float(norms.max())}
        history.append(entry)
        if params.log_every and it % params.log_every == 0:
            log.info("iteration %d: mean offset %.3e, max %.3e", it, entry["mean_offset"], entry["max_offset"])
        if entry["mean_offset"] < params.convergence_threshold:
            converged = True
            break

    assert np.array_equal(cur[fixed], pinned)
    out = UVEmbedding(cur, "square")
    if not converged:
        log.warning("deformation did not converge in %d iterations", params.max_iterations)
    return DeformResult(out, converged, it, history, targets, check_flips(out, mesh))
