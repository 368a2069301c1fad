"""Least-squares rigid alignment (Kabsch) shared by the deformation and metrics code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ratio of 2nd to 1st singular value below which the source is treated as collinear
COLLINEAR_TOL = 1e-10


@dataclass
class RigidFit:
    rotation: np.ndarray
    translation: np.ndarray
    residual: float
    degenerate: bool = False


def kabsch(src: np.ndarray, dst: np.ndarray) -> RigidFit:
    """Best rotation R (det +1) and translation T with R @ src_i + T ~ dst_i.

    Reflections are removed by negating the axis of the smallest singular
    value. ``degenerate`` is set when the cross-covariance has rank < 2, in
    which case the rotation is not unique.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("point sets must both have shape (k, 3)")
    if src.shape[0] < 3:
        raise ValueError(f"need at least 3 point pairs, got {src.shape[0]}")
    R, T, degenerate = _kabsch_batch(src[None], dst[None])
    R, T = R[0], T[0]
    resid = float(np.sum((src @ R.T + T - dst) ** 2))
    return RigidFit(R, T, resid, bool(degenerate[0]))


def _kabsch_batch(src: np.ndarray, dst: np.ndarray):
    """Vectorized Kabsch over a stack of equally sized point sets (b, k, 3)."""
    cs = src.mean(axis=1, keepdims=True)
    cd = dst.mean(axis=1, keepdims=True)
    H = np.einsum("bki,bkj->bij", src - cs, dst - cd)
    U, S, Vt = np.linalg.svd(H)
    # det(V U^T) = det(V^T) det(U)
    d = np.sign(np.linalg.det(Vt) * np.linalg.det(U))
    d[d == 0] = 1.0
    D = np.zeros_like(H)
    D[:, 0, 0] = 1.0
    D[:, 1, 1] = 1.0
    D[:, 2, 2] = d
    # R = V D U^T
    R = np.einsum("bji,bjk,bkl->bil", Vt, D, U.transpose(0, 2, 1))
    T = cd[:, 0] - np.einsum("bij,bj->bi", R, cs[:, 0])
    scale = np.where(S[:, 0] > 0, S[:, 0], 1.0)
    degenerate = S[:, 1] / scale < COLLINEAR_TOL
    return R, T, degenerate
