"""Attribute-translation loss terms as plain batch-mean evaluators.

Network outputs (critic scores, classifier logits, generated shapes and
maps) come in as arrays; nothing here runs a network. Each differentiable
loss has a ``*_grad`` companion giving the gradient w.r.t. its first
argument.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .sampling import flip_array

N_EXPRESSIONS = 20
N_GENDERS = 2
LABEL_DIM = N_EXPRESSIONS + N_GENDERS + 1
AGE_RANGE = (16.0, 70.0)

EXPR = slice(0, N_EXPRESSIONS)
GENDER = slice(N_EXPRESSIONS, N_EXPRESSIONS + N_GENDERS)
AGE = N_EXPRESSIONS + N_GENDERS


@dataclass(frozen=True)
class DomainLabel:
    expression: int
    gender: int
    age: float  # normalized to [-1, 1]

    @property
    def packed(self) -> np.ndarray:
        c = np.zeros(LABEL_DIM)
        c[self.expression] = 1.0
        c[N_EXPRESSIONS + self.gender] = 1.0
        c[AGE] = self.age
        return c

    @classmethod
    def unpack(cls, c) -> "DomainLabel":
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (LABEL_DIM,):
            raise ValueError(f"label vector must have length {LABEL_DIM}")
        return cls(int(np.argmax(c[EXPR])), int(np.argmax(c[GENDER])), float(c[AGE]))


def normalize_age(age_years: float) -> float:
    lo, hi = AGE_RANGE
    return 2.0 * (age_years - lo) / (hi - lo) - 1.0


def encode_label(expression: int, gender: int, age_years: float) -> DomainLabel:
    """Pack expression id, gender id and age in years into a domain label."""
    if not 0 <= expression < N_EXPRESSIONS:
        raise ValueError(f"expression id {expression} outside [0, {N_EXPRESSIONS})")
    if not 0 <= gender < N_GENDERS:
        raise ValueError(f"gender id {gender} outside [0, {N_GENDERS})")
    if not AGE_RANGE[0] <= age_years <= AGE_RANGE[1]:
        raise ValueError(f"age {age_years} outside {AGE_RANGE}")
    return DomainLabel(int(expression), int(gender), normalize_age(float(age_years)))


@dataclass
class LossWeights:
    lambda_cls_c: float = 0.02
    lambda_cls_m: float = 0.05
    lambda_cyc: float = 2.0
    lambda_rec: float = 0.1
    lambda_sym: float = 0.5
    lambda_gp: float = 0.2
    alpha: float = 0.01

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


def _as_batch(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        a = a[None]
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-D batch of scalars")
    return a


def gradient_penalty(grad_norms, alpha: float = 0.01) -> float:
    g = _as_batch(grad_norms, "grad_norms")
    return float(np.mean((g - alpha) ** 2))


def gradient_penalty_grad(grad_norms, alpha: float = 0.01) -> np.ndarray:
    g = _as_batch(grad_norms, "grad_norms")
    return 2.0 * (g - alpha) / g.size


def adversarial_terms(d_real, d_fake, grad_norms, alpha: float = 0.01,
                      lambda_gp: float = 0.2) -> dict:
    """Wasserstein critic terms with gradient penalty.

    ``adv`` = mean(D(x)) - mean(D(G(x, c))) - lambda_gp * gp is the quantity
    the critic maximizes; ``d_loss_part`` is its negation and
    ``g_loss_part`` = -mean(D(G(x, c))) is the generator-dependent part.
    """
    r = _as_batch(d_real, "d_real")
    f = _as_batch(d_fake, "d_fake")
    g = _as_batch(grad_norms, "grad_norms")
    if not (r.shape == f.shape == g.shape):
        raise ValueError(f"batch sizes differ: {r.shape}, {f.shape}, {g.shape}")
    gp = gradient_penalty(g, alpha)
    gap = float(r.mean() - f.mean())
    adv = gap - lambda_gp * gp
    return {
        "wasserstein_gap": gap,
        "gp": gp,
        "adv": adv,
        "d_loss_part": -adv,
        "g_loss_part": float(-f.mean()),
    }


def _check_layout(scores, targets):
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if s.ndim == 1:
        s = s[None]
    if t.ndim == 1:
        t = t[None]
    if s.shape[-1] != LABEL_DIM or t.shape != s.shape:
        raise ValueError(f"scores {s.shape} and targets {t.shape} must both be (batch, {LABEL_DIM})")
    return s, t


def classification_terms(scores, targets) -> dict:
    """Per-segment batch means: expression CE, gender CE, age squared error."""
    s, t = _check_layout(scores, targets)
    ce_e = -np.sum(t[:, EXPR] * log_softmax(s[:, EXPR], axis=1), axis=1)
    ce_g = -np.sum(t[:, GENDER] * log_softmax(s[:, GENDER], axis=1), axis=1)
    se_a = (s[:, AGE] - t[:, AGE]) ** 2
    return {"expression": float(ce_e.mean()), "gender": float(ce_g.mean()), "age": float(se_a.mean())}


def classification_loss(scores, targets, mode: str = "real") -> float:
    """Domain classification loss summed over the three label segments.

    ``mode`` documents the wiring only: real shapes scored against their
    source label, or generated shapes against the target label.
    """
    if mode not in ("real", "fake"):
        raise ValueError(f"mode must be 'real' or 'fake', got {mode!r}")
    t = classification_terms(scores, targets)
    return t["expression"] + t["gender"] + t["age"]


def classification_loss_grad(scores, targets) -> np.ndarray:
    s, t = _check_layout(scores, targets)
    B = s.shape[0]
    g = np.zeros_like(s)
    g[:, EXPR] = softmax(s[:, EXPR], axis=1) * t[:, EXPR].sum(axis=1, keepdims=True) - t[:, EXPR]
    g[:, GENDER] = softmax(s[:, GENDER], axis=1) * t[:, GENDER].sum(axis=1, keepdims=True) - t[:, GENDER]
    g[:, AGE] = 2.0 * (s[:, AGE] - t[:, AGE])
    return g / B


def _l1_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def cycle_loss(x, x_cycled) -> float:
    """Mean absolute difference between shapes and their round-trip translation."""
    a, b = _l1_pair(x, x_cycled)
    return float(np.abs(a - b).mean())


def cycle_loss_grad(x, x_cycled) -> np.ndarray:
    a, b = _l1_pair(x, x_cycled)
    return np.sign(a - b) / a.size


def reconstruction_loss(x, x_same_domain) -> float:
    """Same L1 as the cycle term; fed with a same-label translation."""
    return cycle_loss(x, x_same_domain)


reconstruction_loss_grad = cycle_loss_grad


def _symmetry_parts(y, mask, asymmetric):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 3:
        y = y[None]
    if y.ndim != 4 or y.shape[1] != 3:
        raise ValueError("maps must have shape (batch, 3, H, W)")
    B, _, H, W = y.shape
    m = np.ones((H, W), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != (H, W):
        raise ValueError("mask must have shape (H, W)")
    valid = m & m[:, ::-1]
    flags = np.zeros(B, dtype=bool) if asymmetric is None else np.asarray(asymmetric, dtype=bool).reshape(-1)
    if flags.shape != (B,):
        raise ValueError("one asymmetric flag per sample is required")
    return y, valid, flags


def symmetry_loss(y, mask=None, asymmetric=None, return_info: bool = False):
    """L1 distance between each map and its flipped copy over valid pixels.

    Per sample the absolute differences are summed over channels and
    averaged over pixels valid in both the mask and its mirror; samples
    flagged asymmetric are left out of the batch mean. An all-flagged
    batch gives 0 (``excluded_all`` in the info dict).
    """
    y, valid, flags = _symmetry_parts(y, mask, asymmetric)
    keep = ~flags
    info = {"n_used": int(keep.sum()), "n_excluded": int(flags.sum()),
            "excluded_all": bool(not keep.any())}
    n_valid = int(valid.sum())
    if not keep.any() or n_valid == 0:
        return (0.0, info) if return_info else 0.0
    r = y[keep] - flip_array(y[keep], channel_axis=1, width_axis=3)
    per_sample = np.abs(r).sum(axis=1)[:, valid].sum(axis=1) / n_valid
    loss = float(per_sample.mean())
    return (loss, info) if return_info else loss


def symmetry_loss_grad(y, mask=None, asymmetric=None) -> np.ndarray:
    y, valid, flags = _symmetry_parts(y, mask, asymmetric)
    g = np.zeros_like(y)
    keep = ~flags
    n_valid = int(valid.sum())
    if not keep.any() or n_valid == 0:
        return g
    s = np.sign(y[keep] - flip_array(y[keep], channel_axis=1, width_axis=3)) * valid
    # d/dy |y - F(y)| = s - F^T s, and F is its own transpose
    g[keep] = (s - flip_array(s, channel_axis=1, width_axis=3)) / (n_valid * keep.sum())
    return g


@dataclass
class LossParts:
    adv: float = 0.0
    adv_g: float | None = None  # generator-side adversarial value; defaults to ``adv``
    cls_real_c: float = 0.0
    cls_real_m: float = 0.0
    cls_fake_c: float = 0.0
    cls_fake_m: float = 0.0
    cyc: float = 0.0
    rec: float = 0.0
    sym: float = 0.0


def total_losses(parts: LossParts, w: LossWeights | None = None) -> dict:
    """Critic and generator objectives as weighted sums of the parts.

    Classification terms are split: expression and gender cross-entropy
    use ``lambda_cls_c``, age regression uses ``lambda_cls_m``.
    """
    w = w or LossWeights()
    for name, value in asdict(parts).items():
        if value is not None and not math.isfinite(value):
            raise ValueError(f"loss part {name} is not finite ({value})")
    adv_g = parts.adv if parts.adv_g is None else parts.adv_g
    L_D = -parts.adv + w.lambda_cls_c * parts.cls_real_c + w.lambda_cls_m * parts.cls_real_m
    L_G = (adv_g + w.lambda_cls_c * parts.cls_fake_c + w.lambda_cls_m * parts.cls_fake_m
           + w.lambda_cyc * parts.cyc + w.lambda_rec * parts.rec + w.lambda_sym * parts.sym)
    return {"L_D": float(L_D), "L_G": float(L_G)}


def sample_augmentation(seed: int, size: int | None = None,
                        scale_range=(0.9, 1.1), angle_range_deg=(-10.0, 10.0)) -> dict:
    """Uniform random scale and three Euler angles (degrees), reproducible per seed."""
    rng = np.random.default_rng(seed)
    shape = () if size is None else (size,)
    scale = rng.uniform(*scale_range, size=shape)
    euler = rng.uniform(*angle_range_deg, size=shape + (3,))
    if size is None:
        return {"scale": float(scale), "euler": euler}
    return {"scale": scale, "euler": euler}


def apply_augmentation(vertices, aug: dict) -> np.ndarray:
    """Scale and rotate (xyz Euler, degrees) about the centroid."""
    from scipy.spatial.transform import Rotation

    v = np.asarray(vertices, dtype=np.float64)
    R = Rotation.from_euler("xyz", aug["euler"], degrees=True).as_matrix()
    c = v.mean(axis=0)
    return (v - c) @ R.T * aug["scale"] + c
