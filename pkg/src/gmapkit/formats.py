"""On-disk formats: GMAP maps, raster tables, uv documents and PNG previews."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .harmonic import UVEmbedding
from .sampling import GeometricMap, RasterTable

GMAP_MAGIC = b"GMAP"
TABLE_MAGIC = b"GTAB"
TABLE_VERSION = 1
SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


def write_gmap(gmap: GeometricMap, path) -> None:
    """magic, u32 H, u32 W, u32 C=3, H*W*C float32 LE, H*W mask bytes."""
    H, W = gmap.shape
    with open(path, "wb") as fh:
        fh.write(GMAP_MAGIC)
        fh.write(struct.pack("<III", H, W, 3))
        fh.write(np.ascontiguousarray(gmap.data, dtype="<f4").tobytes())
        fh.write(gmap.mask.astype(np.uint8).tobytes())


def read_gmap(path) -> GeometricMap:
    raw = Path(path).read_bytes()
    if raw[:4] != GMAP_MAGIC:
        raise FormatError(f"{path}: not a GMAP file (bad magic)")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    H, W, C = struct.unpack_from("<III", raw, 4)
    if C != 3:
        raise FormatError(f"{path}: expected 3 channels, found {C}")
    n_data = H * W * C * 4
    if len(raw) != 16 + n_data + H * W:
        raise FormatError(f"{path}: size does not match a {H}x{W}x{C} map")
    data = np.frombuffer(raw, dtype="<f4", count=H * W * C, offset=16).reshape(H, W, C)
    mask = np.frombuffer(raw, dtype=np.uint8, count=H * W, offset=16 + n_data).reshape(H, W)
    return GeometricMap(data.astype(np.float64), mask.astype(bool))


def write_table(table: RasterTable, path) -> None:
    """Binary raster table: header, triangle ids, weights, source triangles."""
    H, W = table.shape
    m = len(table.triangles)
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<IIIIII", TABLE_VERSION, H, W, table.n_vertices, m, table.conflicts))
        fh.write(np.ascontiguousarray(table.tri_id, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(table.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.triangles, dtype="<i4").tobytes())


def read_table(path) -> RasterTable:
    raw = Path(path).read_bytes()
    if raw[:4] != TABLE_MAGIC:
        raise FormatError(f"{path}: not a raster table (bad magic)")
    if len(raw) < 28:
        raise FormatError(f"{path}: truncated header")
    version, H, W, n, m, conflicts = struct.unpack_from("<IIIIII", raw, 4)
    if version != TABLE_VERSION:
        raise FormatError(f"{path}: unsupported table version {version}")
    off = 28
    sizes = [H * W * 4, H * W * 3 * 8, m * 3 * 4]
    if len(raw) != off + sum(sizes):
        raise FormatError(f"{path}: size does not match header")
    tri_id = np.frombuffer(raw, "<i4", H * W, off).reshape(H, W).astype(np.int64)
    off += sizes[0]
    weights = np.frombuffer(raw, "<f8", H * W * 3, off).reshape(H, W, 3).copy()
    off += sizes[1]
    tris = np.frombuffer(raw, "<i4", m * 3, off).reshape(m, 3).astype(np.int64)
    return RasterTable(tri_id, weights, tris, n, conflicts)


def write_uv(uv: UVEmbedding, path, **extra) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "frame": uv.frame, "n": uv.n,
           "uv": uv.uv.tolist()}
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def read_uv(path) -> tuple[UVEmbedding, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        uv = UVEmbedding(np.array(doc["uv"], dtype=np.float64), doc.get("frame", "square"))
    except (KeyError, json.JSONDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid uv document ({exc})") from None
    return uv, doc


def write_png(gmap: GeometricMap, path) -> None:
    """8-bit preview, each channel stretched over its min/max on valid pixels."""
    from PIL import Image

    img = np.zeros(gmap.data.shape, dtype=np.uint8)
    if gmap.mask.any():
        vals = gmap.data[gmap.mask]
        lo, hi = vals.min(axis=0), vals.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        q = np.clip(np.round((gmap.data - lo) / span * 255.0), 0, 255).astype(np.uint8)
        img[gmap.mask] = q[gmap.mask]
    # row 0 is v ~ 0; images are stored top row first
    Image.fromarray(img[::-1]).save(path)


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text
