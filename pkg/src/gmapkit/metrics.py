"""Rigid alignment of shape pairs and per-vertex position/normal errors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .rigid import kabsch

PROCRUSTES = "procrustes_known_correspondence"
ICP = "icp_nearest_neighbor"


@dataclass
class AlignmentResult:
    rotation: np.ndarray
    translation: np.ndarray
    rms_before: float
    rms_after: float
    method: str
    iterations: int = 1
    rms_history: list[float] = field(default_factory=list)
    degenerate: bool = False

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "rms_before": self.rms_before,
            "rms_after": self.rms_after,
            "iterations": self.iterations,
        }


def _points(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3)")
    if len(a) < 3:
        raise ValueError(f"{name} needs at least 3 points, got {len(a)}")
    return a


def _rms(a, b) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def procrustes_align(X, Y) -> AlignmentResult:
    """Closed-form rigid fit of X onto Y with known correspondences."""
    X = _points(X, "X")
    Y = _points(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"point counts differ: {len(X)} vs {len(Y)}")
    fit = kabsch(X, Y)
    if fit.degenerate:
        warnings.warn("source points are (nearly) collinear; rotation is not unique", RuntimeWarning)
    before = _rms(X, Y)
    after = _rms(X @ fit.rotation.T + fit.translation, Y)
    return AlignmentResult(fit.rotation, fit.translation, before, after, PROCRUSTES,
                           1, [before, after], fit.degenerate)


def icp_align(X, Y, max_iter: int = 50, tol: float = 1e-8) -> AlignmentResult:
    """Point-to-point ICP of X onto the cloud Y.

    Each step matches every moved X point to its nearest Y point and solves
    the rigid fit of the matched pairs exactly, so the matched rms never
    increases. Stops when the relative improvement drops below ``tol``.
    """
    X = _points(X, "X")
    Y = _points(Y, "Y")
    tree = cKDTree(Y)
    R = np.eye(3)
    T = np.zeros(3)
    dist, idx = tree.query(X)
    history = [float(np.sqrt(np.mean(dist ** 2)))]
    rms_before = history[0]
    it = 0
    degenerate = False
    while it < max_iter and history[-1] > 0:
        it += 1
        fit = kabsch(X, Y[idx])
        degenerate = fit.degenerate
        R, T = fit.rotation, fit.translation
        dist, idx = tree.query(X @ R.T + T)
        rms = float(np.sqrt(np.mean(dist ** 2)))
        prev = history[-1]
        history.append(rms)
        if prev - rms <= tol * prev:
            break
    if it == 0:
        it = 1
        history.append(history[0])
    return AlignmentResult(R, T, rms_before, history[-1], ICP, it, history, degenerate)


def mse_v(X, Y, squared: bool = False) -> float:
    """Mean per-vertex Euclidean distance (mm); ``squared`` gives mean squared distance."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"vertex arrays must match in shape (n, 3): {X.shape} vs {Y.shape}")
    d2 = np.sum((X - Y) ** 2, axis=1)
    return float(d2.mean() if squared else np.sqrt(d2).mean())


def mse_n(NX, NY, return_skipped: bool = False):
    """Mean angle in degrees between paired normals.

    Inputs are re-normalized; pairs where either normal has zero length are
    left out and counted.
    """
    NX = np.asarray(NX, dtype=np.float64)
    NY = np.asarray(NY, dtype=np.float64)
    if NX.shape != NY.shape or NX.ndim != 2 or NX.shape[1] != 3:
        raise ValueError(f"normal arrays must match in shape (n, 3): {NX.shape} vs {NY.shape}")
    lx = np.linalg.norm(NX, axis=1)
    ly = np.linalg.norm(NY, axis=1)
    ok = (lx > 0) & (ly > 0)
    skipped = int((~ok).sum())
    if not ok.any():
        value = float("nan")
    else:
        c = np.sum(NX[ok] * NY[ok], axis=1) / (lx[ok] * ly[ok])
        value = float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))).mean())
    return (value, skipped) if return_skipped else value
