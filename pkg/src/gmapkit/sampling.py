"""Forward (barycentric) and backward (bilinear) mapping between a mesh and its map.

Pixel (row i, column j) of an H x W map is centred at uv = ((j + 0.5) / W,
(i + 0.5) / H); the column index follows u, so a horizontal flip mirrors
u -> 1 - u. Rasterization and bilinear sampling share that convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harmonic import UVEmbedding
from .mesh import Mesh

DEFAULT_RESOLUTION = 128
INSIDE_TOL = 1e-9


@dataclass
class RasterTable:
    """Per-pixel triangle id and barycentric weights (``tri_id == -1`` means empty)."""

    tri_id: np.ndarray      # (H, W) int64
    weights: np.ndarray     # (H, W, 3) float64
    triangles: np.ndarray   # (m, 3) vertex indices of the source mesh
    n_vertices: int
    conflicts: int = 0

    @property
    def mask(self) -> np.ndarray:
        return self.tri_id >= 0

    @property
    def resolution(self) -> int:
        return self.tri_id.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.tri_id.shape


@dataclass
class GeometricMap:
    """H x W x 3 array of 3D coordinates with its validity mask."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("map data must have shape (H, W, 3)")
        if self.mask.shape != self.data.shape[:2]:
            raise ValueError("mask shape does not match map data")

    @property
    def resolution(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


def pixel_centers(height: int, width: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    width = height if width is None else width
    return (np.arange(width) + 0.5) / width, (np.arange(height) + 0.5) / height


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def barycentric_weights(p, p1, p2, p3) -> np.ndarray:
    """Barycentric weights of points ``p`` (k, 2) in triangle p1 p2 p3 via 2D cross products."""
    p = np.asarray(p, dtype=np.float64)
    px, py = p[..., 0], p[..., 1]
    den = _cross(p2[0] - p1[0], p2[1] - p1[1], p3[0] - p1[0], p3[1] - p1[1])
    w1 = _cross(p2[0] - px, p2[1] - py, p3[0] - px, p3[1] - py) / den
    w2 = _cross(p3[0] - px, p3[1] - py, p1[0] - px, p1[1] - py) / den
    w3 = _cross(p1[0] - px, p1[1] - py, p2[0] - px, p2[1] - py) / den
    return np.stack([w1, w2, w3], axis=-1)


def build_raster_table(uv: UVEmbedding, mesh: Mesh, resolution: int = DEFAULT_RESOLUTION) -> RasterTable:
    """Assign each pixel centre to the triangle containing it.

    Overlaps (from flipped triangles) resolve to the lowest triangle id;
    pixels strictly inside more than one triangle are counted in
    ``conflicts``.
    """
    if resolution < 4:
        raise ValueError(f"resolution must be >= 4, got {resolution}")
    uv.check_mesh(mesh)
    H = W = int(resolution)
    tri_id = np.full((H, W), -1, dtype=np.int64)
    weights = np.zeros((H, W, 3))
    strict = np.zeros((H, W), dtype=np.int32)
    cu, cv = pixel_centers(H, W)
    P = uv.uv[mesh.triangles]  # (m, 3, 2)
    lo = P.min(axis=1)
    hi = P.max(axis=1)
    j0 = np.clip(np.ceil(lo[:, 0] * W - 0.5 - 1e-6), 0, W).astype(int)
    j1 = np.clip(np.floor(hi[:, 0] * W - 0.5 + 1e-6), -1, W - 1).astype(int)
    i0 = np.clip(np.ceil(lo[:, 1] * H - 0.5 - 1e-6), 0, H).astype(int)
    i1 = np.clip(np.floor(hi[:, 1] * H - 0.5 + 1e-6), -1, H - 1).astype(int)
    for t in range(mesh.n_triangles):
        if j1[t] < j0[t] or i1[t] < i0[t]:
            continue
        p1, p2, p3 = P[t]
        if _cross(p2[0] - p1[0], p2[1] - p1[1], p3[0] - p1[0], p3[1] - p1[1]) == 0:
            continue
        gu, gv = np.meshgrid(cu[j0[t]:j1[t] + 1], cv[i0[t]:i1[t] + 1])
        w = barycentric_weights(np.stack([gu, gv], axis=-1), p1, p2, p3)
        inside = (w >= -INSIDE_TOL).all(axis=-1)
        if not inside.any():
            continue
        sl = (slice(i0[t], i1[t] + 1), slice(j0[t], j1[t] + 1))
        strict[sl] += (w > INSIDE_TOL).all(axis=-1)
        take = inside & (tri_id[sl] < 0)
        tri_id[sl][take] = t
        weights[sl][take] = w[take]
    return RasterTable(tri_id, weights, np.array(mesh.triangles), mesh.n_vertices,
                       int((strict >= 2).sum()))


def forward_map(vertices, table: RasterTable) -> GeometricMap:
    """Barycentric blend of vertex positions at every valid pixel; zero elsewhere."""
    v = np.asarray(vertices, dtype=np.float64)
    if v.shape != (table.n_vertices, 3):
        raise ValueError(f"expected ({table.n_vertices}, 3) vertices, got {v.shape}")
    mask = table.mask
    data = np.zeros(table.shape + (3,))
    corners = table.triangles[table.tri_id[mask]]          # (k, 3)
    data[mask] = np.einsum("kc,kcd->kd", table.weights[mask], v[corners])
    return GeometricMap(data, mask)


def _bilinear_setup(coord: np.ndarray, size: int):
    f = coord * size - 0.5
    clamped = (f < 0) | (f > size - 1)
    f = np.clip(f, 0.0, size - 1)
    i0 = np.minimum(np.floor(f).astype(np.int64), size - 2)
    return i0, f - i0, clamped


def backward_sample(gmap: GeometricMap, uv, return_masked: bool = False):
    """Bilinear read of the map at each uv, clamped to the pixel-centre lattice.

    With ``return_masked`` a boolean per point tells whether any of the four
    pixels read carries a non-zero weight but lies outside the mask.
    """
    q = uv.uv if isinstance(uv, UVEmbedding) else np.asarray(uv, dtype=np.float64)
    q = np.atleast_2d(q)
    H, W = gmap.shape
    x0, tx, _ = _bilinear_setup(q[:, 0], W)
    y0, ty, _ = _bilinear_setup(q[:, 1], H)
    I = gmap.data
    w00 = (1 - tx) * (1 - ty)
    w01 = tx * (1 - ty)
    w10 = (1 - tx) * ty
    w11 = tx * ty
    out = (w00[:, None] * I[y0, x0] + w01[:, None] * I[y0, x0 + 1]
           + w10[:, None] * I[y0 + 1, x0] + w11[:, None] * I[y0 + 1, x0 + 1])
    if not return_masked:
        return out
    m = gmap.mask
    reads_masked = (((w00 > 0) & ~m[y0, x0]) | ((w01 > 0) & ~m[y0, x0 + 1])
                    | ((w10 > 0) & ~m[y0 + 1, x0]) | ((w11 > 0) & ~m[y0 + 1, x0 + 1]))
    return out, reads_masked


@dataclass
class SamplingJacobian:
    value: np.ndarray          # (3,)
    d_uv: np.ndarray           # (3, 2) derivative w.r.t. (u, v)
    pixels: np.ndarray         # (4, 2) (row, col) of the pixels read
    pixel_weights: np.ndarray  # (4,) d value / d map[pixel], same for every channel
    one_sided: bool            # uv on a lattice line or clamped: derivative is one-sided


def sampling_jacobian(gmap: GeometricMap, uv_point) -> SamplingJacobian:
    """Analytic derivatives of the bilinear read at a single uv."""
    q = np.asarray(uv_point, dtype=np.float64).reshape(2)
    H, W = gmap.shape
    fx, fy = q[0] * W - 0.5, q[1] * H - 0.5
    x0, tx, cx = (a[0] for a in _bilinear_setup(q[:1], W))
    y0, ty, cy = (a[0] for a in _bilinear_setup(q[1:], H))
    I = gmap.data
    a, b = I[y0, x0], I[y0, x0 + 1]
    c, d = I[y0 + 1, x0], I[y0 + 1, x0 + 1]
    value = (1 - tx) * (1 - ty) * a + tx * (1 - ty) * b + (1 - tx) * ty * c + tx * ty * d
    du = ((1 - ty) * (b - a) + ty * (d - c)) * (0.0 if cx else W)
    dv = ((1 - tx) * (c - a) + tx * (d - b)) * (0.0 if cy else H)
    on_line = float(fx).is_integer() or float(fy).is_integer()
    return SamplingJacobian(
        value=value,
        d_uv=np.column_stack([du, dv]),
        pixels=np.array([[y0, x0], [y0, x0 + 1], [y0 + 1, x0], [y0 + 1, x0 + 1]]),
        pixel_weights=np.array([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty]),
        one_sided=bool(on_line or cx or cy),
    )


def roundtrip_error(mesh: Mesh, uv: UVEmbedding, table: RasterTable, vertices=None) -> dict:
    """Per-vertex distance between the mesh and its forward-then-backward image (mm).

    ``interior_*`` statistics cover vertices inside the pixel-centre lattice,
    where both interpolants are exact for linear fields; vertices whose read
    touches a masked pixel are summarized separately.
    """
    V = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    gmap = forward_map(V, table)
    rec, masked = backward_sample(gmap, uv, return_masked=True)
    err = np.linalg.norm(rec - V, axis=1)
    H, W = gmap.shape
    q = uv.uv
    interior = ((q[:, 0] >= 0.5 / W) & (q[:, 0] <= 1 - 0.5 / W)
                & (q[:, 1] >= 0.5 / H) & (q[:, 1] <= 1 - 0.5 / H))
    diag = float(np.linalg.norm(V.max(axis=0) - V.min(axis=0)))

    def stats(sel):
        return (float(err[sel].mean()), float(err[sel].max())) if sel.any() else (0.0, 0.0)

    clean = ~masked
    mean, mx = stats(np.ones(len(err), dtype=bool))
    imean, imax = stats(interior & clean)
    mmean, mmax = stats(masked)
    return {
        "mean": mean,
        "max": mx,
        "interior_mean": imean,
        "interior_max": imax,
        "n_interior": int((interior & clean).sum()),
        "n_masked": int(masked.sum()),
        "masked_mean": mmean,
        "masked_max": mmax,
        "bbox_diagonal": diag,
        "relative_mean": mean / diag if diag > 0 else 0.0,
        "errors": err,
    }


def flip_array(y: np.ndarray, channel_axis: int = -1, width_axis: int = -2) -> np.ndarray:
    """Mirror along the width axis and negate channel 0."""
    out = np.flip(y, axis=width_axis).copy()
    idx = [slice(None)] * out.ndim
    idx[channel_axis] = 0
    out[tuple(idx)] = -out[tuple(idx)]
    return out


def flip_map(gmap: GeometricMap) -> GeometricMap:
    """Horizontal mirror with the sign of the x channel reversed."""
    return GeometricMap(flip_array(gmap.data, channel_axis=2, width_axis=1), gmap.mask[:, ::-1].copy())
