"""Deterministic test meshes, including a mirror-symmetric synthetic face."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


def grid_triangles(rows: int, cols: int, pattern: str = "quadrant") -> np.ndarray:
    """CCW triangles of a ``rows`` x ``cols`` vertex grid (row-major indices).

    ``pattern="quadrant"`` orients each cell diagonal away from the grid
    centre, which keeps the layout mirror-symmetric in both axes and gives
    every grid corner two triangles. ``"uniform"`` uses one diagonal everywhere.
    """
    tris = []
    cr, cc = (rows - 1) / 2.0, (cols - 1) / 2.0
    for r in range(rows - 1):
        for c in range(cols - 1):
            a = r * cols + c
            b = a + 1
            e = a + cols
            d = e + 1
            if pattern == "uniform":
                main = True
            else:
                main = (c + 0.5 - cc) * (r + 0.5 - cr) > 0
            if main:
                tris += [(a, b, d), (a, d, e)]
            else:
                tris += [(a, b, e), (b, d, e)]
    return np.array(tris, dtype=np.int64)


def planar_grid(rows: int = 5, cols: int = 5, size=(1.0, 1.0), pattern: str = "uniform") -> Mesh:
    """Flat grid in the z=0 plane spanning [0, size_x] x [0, size_y]."""
    ys, xs = np.meshgrid(np.linspace(0, size[1], rows), np.linspace(0, size[0], cols), indexing="ij")
    v = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(rows * cols)])
    return Mesh(v, grid_triangles(rows, cols, pattern))


def hexagon_patch(radius: float = 1.0) -> Mesh:
    """Regular hexagon fan: centre vertex 0 ringed by 6 boundary vertices."""
    ang = np.arange(6) * np.pi / 3
    v = np.vstack([[0.0, 0.0, 0.0], np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(6)])])
    tris = [(0, 1 + k, 1 + (k + 1) % 6) for k in range(6)]
    return Mesh(v, tris)


def icosahedron() -> Mesh:
    phi = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return Mesh(v, f)


def icosphere(subdivisions: int = 3) -> Mesh:
    """Unit sphere from a subdivided icosahedron (20 * 4**k faces)."""
    base = icosahedron()
    verts = [tuple(p) for p in base.vertices]
    faces = [tuple(f) for f in base.triangles]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = (np.array(verts[a]) + np.array(verts[b])) / 2
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return Mesh(np.array(verts), np.array(faces))


def random_disk_mesh(n_target: int, rng: np.random.Generator, bumpy: bool = True) -> Mesh:
    """Small irregular height-field patch over a jittered grid (for solver tests)."""
    side = max(3, int(round(np.sqrt(n_target))))
    rows = side
    cols = max(3, int(round(n_target / side)))
    ys, xs = np.meshgrid(np.linspace(0, 1, rows), np.linspace(0, 1, cols), indexing="ij")
    jitter = rng.uniform(-0.15, 0.15, size=(2, rows, cols)) / max(rows, cols)
    jitter[:, [0, -1], :] = 0.0
    jitter[:, :, [0, -1]] = 0.0
    x = xs + jitter[0]
    y = ys + jitter[1]
    z = 0.2 * np.sin(3 * x) * np.cos(2 * y) if bumpy else np.zeros_like(x)
    z = z + (rng.normal(scale=0.02, size=x.shape) if bumpy else 0.0)
    v = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return Mesh(v, grid_triangles(rows, cols, "quadrant"))


# ---------------------------------------------------------------------------
# synthetic face

FACE_WIDTH_MM = 140.0
FACE_HEIGHT_MM = 180.0


def _face_height(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Smooth, x-symmetric relief on the unit disk (x, y normalized), in mm."""
    ax = np.abs(x)
    dome = 55.0 * np.sqrt(np.clip(1.0 - 0.55 * x ** 2 - 0.25 * y ** 2, 0.0, None))

    def bump(cx, cy, sx, sy, amp, xx=ax):
        return amp * np.exp(-((xx - cx) ** 2 / sx ** 2 + (y - cy) ** 2 / sy ** 2))

    nose = bump(0.0, 0.02, 0.12, 0.28, 24.0, x) + bump(0.0, -0.22, 0.16, 0.08, 6.0, x)
    sockets = bump(0.36, 0.28, 0.16, 0.1, -10.0)
    brows = bump(0.34, 0.45, 0.25, 0.07, 5.0)
    cheeks = bump(0.45, -0.1, 0.2, 0.2, 4.0)
    lips = bump(0.0, -0.48, 0.22, 0.05, 4.0, x) - bump(0.0, -0.55, 0.2, 0.02, 2.0, x)
    chin = bump(0.0, -0.82, 0.25, 0.1, 5.0, x)
    return dome + nose + sockets + brows + cheeks + lips + chin


@dataclass
class SyntheticFace:
    mesh: Mesh
    mirror: np.ndarray          # vertex permutation realizing x -> -x
    grid_shape: tuple[int, int]
    param: np.ndarray           # (n, 2) square-grid coordinates in [0, 1]^2
    spec: dict                  # key-vertex document (JSON layout)

    def vertex(self, row: int, col: int) -> int:
        return row * self.grid_shape[1] + col


def synthetic_face(side: int = 55) -> SyntheticFace:
    """Mirror-symmetric face-like height field with a single boundary loop.

    A ``side`` x ``side`` grid (``side`` odd, so the central column is the
    symmetry axis) is warped from the square onto an ellipse and lifted by a
    smooth relief. The default has 3025 vertices.
    """
    if side % 2 == 0 or side < 7:
        raise ValueError("side must be odd and >= 7")
    rows = cols = side
    t, s = np.meshgrid(np.linspace(-1, 1, rows), np.linspace(-1, 1, cols), indexing="ij")
    # square -> disk warp
    x = s * np.sqrt(1.0 - t ** 2 / 2.0)
    y = t * np.sqrt(1.0 - s ** 2 / 2.0)
    z = _face_height(x, y)
    # exact mirror: build the right half from the left half
    mid = cols // 2
    x[:, mid] = 0.0
    x[:, mid + 1:] = -x[:, :mid][:, ::-1]
    y[:, mid + 1:] = y[:, :mid][:, ::-1]
    z[:, mid + 1:] = z[:, :mid][:, ::-1]
    verts = np.column_stack([
        0.5 * FACE_WIDTH_MM * x.ravel(),
        0.5 * FACE_HEIGHT_MM * y.ravel(),
        z.ravel(),
    ])
    mesh = Mesh(verts, grid_triangles(rows, cols, "quadrant"))
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    mirror = rr * cols + (cols - 1 - cc)
    param = np.column_stack([(s.ravel() + 1) / 2, (t.ravel() + 1) / 2])
    face = SyntheticFace(mesh, mirror, (rows, cols), param, {})
    face.spec = _face_spec(face)
    return face


# Left-landmark targets for the default 55x55 face, frozen from a run of the
# full pipeline without landmark constraints (see derive_landmark_targets).
_FROZEN_LANDMARKS = {
    (35, 16): (0.2664, 0.676),
    (35, 23): (0.3816, 0.6701),
    (22, 22): (0.3718, 0.4024),
    (15, 22): (0.3934, 0.2598),
    (28, 24): (0.4231, 0.5303),
}


def _face_spec(face: SyntheticFace) -> dict:
    rows, cols = face.grid_shape
    mid = cols // 2
    pairs = []
    if face.grid_shape == (55, 55):
        for (r, c), (tx, ty) in _FROZEN_LANDMARKS.items():
            left = face.vertex(r, c)
            pairs.append([int(left), int(face.mirror[left]), tx, ty])
    axis = [face.vertex(r, mid) for r in range(1, rows - 1)]
    corners = [face.vertex(0, 0), face.vertex(0, cols - 1),
               face.vertex(rows - 1, cols - 1), face.vertex(rows - 1, 0)]
    return {
        "landmark_pairs": pairs,
        "axis": [int(a) for a in axis],
        "corners": [int(c) for c in corners],
        "boundary_start": int(face.vertex(0, mid)),
    }


def derive_landmark_targets(face: SyntheticFace, left_vertices) -> list[list]:
    """Symmetrized positions of ``left_vertices`` in a landmark-free map build."""
    from .pipeline import build_geometric_map

    doc = dict(face.spec)
    doc["landmark_pairs"] = []
    x = build_geometric_map(face.mesh, doc).embedding.uv
    out = []
    for left in left_vertices:
        right = int(face.mirror[left])
        tx = 0.5 * (x[left, 0] + 1.0 - x[right, 0])
        ty = 0.5 * (x[left, 1] + x[right, 1])
        out.append([int(left), right, float(tx), float(ty)])
    return out
