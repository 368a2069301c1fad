"""Symbolic shape propagation through the generator and critic layouts.

No weights, no execution: every convolution's padding is solved from the
required input and output sizes, so a layout typo surfaces as an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

N_MESH_VERTICES = 10857
MAP_SIZE = 128
LABEL_DIM = 23
N_RESIDUAL = 6

KINDS = ("conv", "deconv", "residual", "concat_label", "geom_map", "grid_sample", "branch_conv")


class ShapeError(ValueError):
    pass


def conv_out(in_size: int, kernel: int, stride: int, pad: int) -> int:
    if in_size <= 0 or kernel <= 0 or stride <= 0 or pad < 0:
        raise ShapeError(f"bad conv arguments in={in_size} k={kernel} s={stride} p={pad}")
    out = (in_size + 2 * pad - kernel) // stride + 1
    if out <= 0:
        raise ShapeError(f"conv output size {out} is not positive")
    return out


def deconv_out(in_size: int, kernel: int, stride: int, pad: int) -> int:
    if in_size <= 0 or kernel <= 0 or stride <= 0 or pad < 0:
        raise ShapeError(f"bad deconv arguments in={in_size} k={kernel} s={stride} p={pad}")
    out = (in_size - 1) * stride - 2 * pad + kernel
    if out <= 0:
        raise ShapeError(f"deconv output size {out} is not positive")
    return out


def solve_pad(in_size: int, out_size: int, kernel: int, stride: int, transposed: bool = False) -> int:
    """Smallest non-negative pad mapping ``in_size`` to ``out_size``."""
    fn = deconv_out if transposed else conv_out
    # conv output grows and deconv output shrinks with pad, so this range is exhaustive
    for pad in range(kernel + stride * max(in_size, out_size) + 1):
        try:
            if fn(in_size, kernel, stride, pad) == out_size:
                return pad
        except ShapeError:
            continue
    kind = "deconv" if transposed else "conv"
    raise ShapeError(f"no pad makes {kind} k={kernel} s={stride} map {in_size} -> {out_size}")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int
    kernel: int = 1
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ValueError("kernel and stride must be >= 1 and pad >= 0")


@dataclass
class TraceRow:
    name: str
    layer: LayerSpec | None
    shape: tuple[int, ...]   # (C, H, W) for feature maps, (3, n) for vertex sets


@dataclass
class ShapeTrace:
    rows: list[TraceRow] = field(default_factory=list)
    pyramid_taps: list[TraceRow] = field(default_factory=list)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [r.shape for r in self.rows]

    @property
    def output(self) -> tuple[int, ...]:
        return self.rows[-1].shape

    def find(self, name: str) -> TraceRow:
        for r in self.rows + self.pyramid_taps:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        def row(r):
            d = {"name": r.name, "shape": list(r.shape)}
            if r.layer is not None:
                d.update(kind=r.layer.kind, kernel=r.layer.kernel, stride=r.layer.stride, pad=r.layer.pad)
            return d
        return {"rows": [row(r) for r in self.rows], "pyramid_taps": [row(r) for r in self.pyramid_taps]}

    def format_table(self, title: str = "") -> str:
        lines = [title] if title else []
        lines.append(f"{'layer':<16} {'kind':<13} {'k':>2} {'s':>2} {'p':>2}  shape")
        for r in self.rows + self.pyramid_taps:
            if r.layer is None:
                k = s = p = "-"
                kind = "input"
            else:
                k, s, p, kind = r.layer.kernel, r.layer.stride, r.layer.pad, r.layer.kind
            lines.append(f"{r.name:<16} {kind:<13} {k:>2} {s:>2} {p:>2}  {' x '.join(map(str, r.shape))}")
        return "\n".join(lines)


class _Tracer:
    def __init__(self, shape):
        self.trace = ShapeTrace([TraceRow("input", None, tuple(shape))])

    @property
    def shape(self):
        return self.trace.rows[-1].shape

    def add(self, name, layer, shape, tap=False):
        row = TraceRow(name, layer, tuple(shape))
        (self.trace.pyramid_taps if tap else self.trace.rows).append(row)
        return row

    def conv(self, name, out_c, out_hw, kernel, stride, transposed=False, src=None, tap=False):
        c, h, w = src if src is not None else self.shape
        pad = solve_pad(h, out_hw, kernel, stride, transposed)
        if solve_pad(w, out_hw, kernel, stride, transposed) != pad:
            raise ShapeError(f"{name}: height and width need different pads")
        kind = "deconv" if transposed else ("branch_conv" if tap else "conv")
        return self.add(name, LayerSpec(kind, out_c, kernel, stride, pad), (out_c, out_hw, out_hw), tap)


def trace_generator(n_vertices: int = N_MESH_VERTICES, size: int = MAP_SIZE,
                    label_dim: int = LABEL_DIM, n_residual: int = N_RESIDUAL) -> ShapeTrace:
    t = _Tracer((3, n_vertices))
    t.add("geom_map", LayerSpec("geom_map", 3), (3, size, size))
    t.add("concat_label", LayerSpec("concat_label", 3 + label_dim), (3 + label_dim, size, size))
    t.conv("conv1", 64, size, 7, 1)
    t.conv("down1", 128, size // 2, 4, 2)
    t.conv("down2", 256, size // 4, 4, 2)
    for k in range(n_residual):
        c, h, w = t.shape
        pad = solve_pad(h, h, 3, 1)
        t.add(f"res{k + 1}", LayerSpec("residual", c, 3, 1, pad), (c, h, w))
    t.conv("up1", 128, size // 2, 4, 2, transposed=True)
    t.conv("up2", 64, size, 4, 2, transposed=True)
    t.conv("conv_out", 3, size, 7, 1)
    t.add("grid_sample", LayerSpec("grid_sample", 3), (3, n_vertices))
    return t.trace


def trace_discriminator(size: int = MAP_SIZE, label_dim: int = LABEL_DIM,
                        tap_channels=(128, 512, 2048)) -> ShapeTrace:
    """Stride-2 cascade down to 2x2 with 1-channel branch taps and a label head."""
    t = _Tracer((3, size, size))
    c, hw = 64, size // 2
    k = 1
    while True:
        row = t.conv(f"conv{k}", c, hw, 4, 2)
        if c in tap_channels:
            t.conv(f"tap{k}", 1, hw, 3, 1, src=row.shape, tap=True)
        if hw == 2:
            break
        c, hw, k = c * 2, hw // 2, k + 1
    t.conv("cls_head", label_dim, 1, 2, 1)
    return t.trace


def pyramid_length(trace: ShapeTrace) -> int:
    """Length of the flattened, concatenated branch outputs."""
    total = 0
    for r in trace.pyramid_taps:
        n = 1
        for d in r.shape:
            n *= d
        total += n
    return total
