"""Triangle mesh container, topology checks and Wavefront OBJ I/O."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ObjParseError(ValueError):
    """Raised for malformed OBJ content; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class Mesh:
    """Shared-topology triangle mesh.

    Vertices are in millimetres, triangles are 0-based and counter-clockwise.
    The 1-ring adjacency is built on construction and the arrays are frozen,
    so a mesh can be shared freely between readers.
    """

    def __init__(self, vertices, triangles):
        v = np.array(vertices, dtype=np.float64)
        t = np.array(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if t.size == 0:
            t = t.reshape(0, 3)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (m, 3)")
        n = v.shape[0]
        if t.size and (t.min() < 0 or t.max() >= n):
            bad = int(np.flatnonzero((t < 0).any(1) | (t >= n).any(1))[0])
            raise IndexError(f"triangle {bad} references a vertex outside [0, {n})")
        degenerate = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if degenerate.any():
            raise ValueError(f"triangle {int(np.flatnonzero(degenerate)[0])} repeats a vertex index")
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t
        self._rings = self._build_rings()

    def _build_rings(self) -> list[np.ndarray]:
        edges = self.edges
        n = self.n_vertices
        # both directions so the ring lists come out symmetric
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        bounds = np.searchsorted(src, np.arange(n + 1))
        rings = [dst[bounds[i]:bounds[i + 1]].copy() for i in range(n)]
        for r in rings:
            r.setflags(write=False)
        return rings

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (i, j) pairs, i < j."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0) if len(e) else e.reshape(0, 2)

    @property
    def adjacency(self) -> list[np.ndarray]:
        return self._rings

    def valences(self) -> np.ndarray:
        return np.array([len(r) for r in self._rings], dtype=np.int64)

    def with_vertices(self, vertices) -> "Mesh":
        """Same topology, new positions."""
        return Mesh(vertices, self.triangles)

    def __repr__(self) -> str:
        return f"Mesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles})"


@dataclass
class TopologyReport:
    n_vertices: int
    n_triangles: int
    is_manifold: bool
    is_oriented: bool
    boundary_loops: int
    boundary_vertices: list[int] = field(default_factory=list)
    non_manifold_edges: int = 0
    non_manifold_vertices: list[int] = field(default_factory=list)
    isolated_vertices: int = 0

    def to_dict(self) -> dict:
        return {
            "n_vertices": self.n_vertices,
            "n_triangles": self.n_triangles,
            "is_manifold": self.is_manifold,
            "is_oriented": self.is_oriented,
            "boundary_loops": self.boundary_loops,
            "boundary_vertices": list(self.boundary_vertices),
            "non_manifold_edges": self.non_manifold_edges,
            "non_manifold_vertices": list(self.non_manifold_vertices),
            "isolated_vertices": self.isolated_vertices,
        }


def one_ring(mesh: Mesh, i: int) -> np.ndarray:
    """Sorted indices of the vertices sharing an edge with vertex ``i``."""
    if not 0 <= int(i) < mesh.n_vertices:
        raise IndexError(f"vertex index {i} outside [0, {mesh.n_vertices})")
    return mesh.adjacency[int(i)]


def _directed_half_edges(tris: np.ndarray) -> np.ndarray:
    return np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])


def validate_topology(mesh: Mesh) -> TopologyReport:
    """Inspect manifoldness, orientation and boundary loops.

    Problems are reported in the returned record, never raised. The
    ``boundary_vertices`` list holds the longest loop (by 3D length), walked so
    that the surface lies on its left.
    """
    if mesh.n_triangles == 0:
        raise ValueError("mesh has no triangles")
    tris = mesh.triangles
    half = _directed_half_edges(tris)
    und = np.sort(half, axis=1)
    uniq, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    non_manifold_edges = int((counts > 2).sum())

    # consistently oriented <=> no directed half-edge is used twice
    oriented = len(np.unique(half, axis=0)) == len(half)

    boundary_mask = counts[inverse] == 1
    bhalf = half[boundary_mask]

    # vertex fans: count connected triangle groups around each vertex
    nm_vertices = _non_manifold_vertices(mesh)

    succ: dict[int, list[int]] = {}
    for a, b in bhalf:
        succ.setdefault(int(a), []).append(int(b))
    loops: list[list[int]] = []
    used: set[tuple[int, int]] = set()
    for a, b in bhalf:
        a, b = int(a), int(b)
        if (a, b) in used:
            continue
        loop = [a]
        used.add((a, b))
        cur = b
        while cur != a:
            loop.append(cur)
            nxt = next((c for c in succ.get(cur, []) if (cur, c) not in used), None)
            if nxt is None:
                break
            used.add((cur, nxt))
            cur = nxt
        loops.append(loop)

    outer: list[int] = []
    if loops:
        v = mesh.vertices

        def loop_length(lp):
            p = v[lp]
            return float(np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1).sum())

        outer = max(loops, key=loop_length)

    valence = mesh.valences()
    return TopologyReport(
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
        is_manifold=non_manifold_edges == 0 and not nm_vertices,
        is_oriented=oriented,
        boundary_loops=len(loops),
        boundary_vertices=outer,
        non_manifold_edges=non_manifold_edges,
        non_manifold_vertices=nm_vertices,
        isolated_vertices=int((valence == 0).sum()),
    )


def _non_manifold_vertices(mesh: Mesh) -> list[int]:
    """Vertices whose incident triangles form more than one edge-connected fan."""
    tris = mesh.triangles
    incident: dict[int, list[int]] = {}
    for f, tri in enumerate(tris):
        for vtx in tri:
            incident.setdefault(int(vtx), []).append(f)
    bad = []
    for vtx, faces in incident.items():
        if len(faces) == 1:
            continue
        # union triangles that share an edge through vtx
        parent = {f: f for f in faces}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        by_other: dict[int, list[int]] = {}
        for f in faces:
            for w in tris[f]:
                if w != vtx:
                    by_other.setdefault(int(w), []).append(f)
        for fs in by_other.values():
            for f in fs[1:]:
                parent[find(f)] = find(fs[0])
        if len({find(f) for f in faces}) > 1:
            bad.append(vtx)
    return sorted(bad)


def face_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unnormalized face normals (length = twice the triangle area)."""
    p = vertices[triangles]
    return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def vertex_normals(mesh: Mesh, vertices: np.ndarray | None = None) -> np.ndarray:
    """Area-weighted unit vertex normals.

    Isolated vertices (or vertices whose fan has zero area) get a zero vector
    and trigger a ``RuntimeWarning``. ``vertices`` overrides the mesh
    positions, which lets callers reuse the topology for deformed shapes.
    """
    v = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    fn = face_normals(v, mesh.triangles)
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], fn)
    length = np.linalg.norm(acc, axis=1)
    zero = length == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} vertices have no incident area; normals set to 0",
                      RuntimeWarning, stacklevel=2)
    out = np.zeros_like(acc)
    out[~zero] = acc[~zero] / length[~zero, None]
    return out


def load_obj(path) -> Mesh:
    """Read ``v`` and ``f`` records from an ASCII OBJ file.

    Texture and normal references in face tokens are ignored; polygons are
    fan-triangulated from their first corner.
    """
    path = Path(path)
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    face_lines: list[int] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError("vertex record needs 3 coordinates", lineno)
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise ObjParseError(f"bad vertex coordinate ({exc})", lineno) from None
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/", 1)[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise ObjParseError(f"bad face index {tok!r}", lineno) from None
                    if k == 0:
                        raise ObjParseError("face index 0 is not valid in OBJ", lineno)
                    # negative indices are relative to the vertices read so far
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                if len(idx) < 3:
                    raise ObjParseError("face needs at least 3 vertices", lineno)
                if len(set(idx)) != len(idx):
                    raise ObjParseError("face repeats a vertex; cannot triangulate", lineno)
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
                    face_lines.append(lineno)
    if not verts:
        raise ObjParseError(f"{path}: no vertex records")
    if not faces:
        raise ObjParseError(f"{path}: no face records")
    n = len(verts)
    for f, ln in zip(faces, face_lines):
        for k in f:
            if not 0 <= k < n:
                raise ObjParseError(f"face index {k + 1} out of range (file has {n} vertices)", ln)
    return Mesh(np.array(verts), np.array(faces))


def save_obj(mesh: Mesh, path, vertices: np.ndarray | None = None) -> None:
    """Write ``v``/``f`` records with 6 decimal places."""
    v = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    if v.shape != mesh.vertices.shape:
        raise ValueError("vertex array does not match mesh")
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in v]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
