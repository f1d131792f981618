"""Receptive-field arithmetic.

Coordinates in this module are 1-indexed, inclusive, and may run into the
padding (below 1 or past the extent).  Everything else in the package is
0-indexed; :func:`to_zero_based` is the single adapter.

Layer geometry follows the (W, H) ordering used for layer tables:
``kernel=(k_W, k_H)``, ``stride=(s_W, s_H)``, ``pad=(p_W, p_H)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .adcore.tensor import Tensor, make_result


class GeometryError(ValueError):
    pass


class StackParseError(GeometryError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    pad: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in ("conv", "pool"):
            raise GeometryError(f"layer kind must be conv or pool, got {self.kind!r}")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.pad) < 0:
            raise GeometryError(f"invalid layer geometry {self}")

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        kw, kh = self.kernel
        sw, sh = self.stride
        pw, ph = self.pad
        return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1

    def describe(self) -> str:
        k, s, p = self.kernel, self.stride, self.pad
        return f"{self.kind} kernel={k[0]}x{k[1]} stride={s[0]}x{s[1]} pad={p[0]}x{p[1]}"


@dataclass(frozen=True)
class BBox:
    x_min: int
    x_max: int
    y_min: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise GeometryError(f"degenerate bbox {self}")

    @property
    def center(self) -> "Center":
        return Center((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def clip(self, h: int, w: int) -> "BBox":
        return BBox(max(self.x_min, 1), min(self.x_max, w), max(self.y_min, 1), min(self.y_max, h))


@dataclass(frozen=True)
class Center:
    x: float
    y: float


class LayerStack(list):
    """Ordered layers from the input upward."""

    def __init__(self, layers: Iterable[LayerSpec] = ()):
        super().__init__(layers)

    def sizes(self, input_size: tuple[int, int]) -> list[tuple[int, int]]:
        """(H, W) at the input and after every layer; rejects non-positive extents."""
        h, w = input_size
        out = [(h, w)]
        for i, layer in enumerate(self):
            kw, kh = layer.kernel
            pw, ph = layer.pad
            if h + 2 * ph < kh or w + 2 * pw < kw:
                raise GeometryError(f"layer {i} ({layer.describe()}) window exceeds padded input {h}x{w}")
            h, w = layer.out_size(h, w)
            if h < 1 or w < 1:
                raise GeometryError(f"layer {i} ({layer.describe()}) yields non-positive extent {h}x{w}")
            out.append((h, w))
        return out

    def output_size(self, input_size: tuple[int, int]) -> tuple[int, int]:
        return self.sizes(input_size)[-1]

    def net_stride(self) -> tuple[int, int]:
        """Product of strides as (s_W, s_H)."""
        sw = int(np.prod([l.stride[0] for l in self])) if self else 1
        sh = int(np.prod([l.stride[1] for l in self])) if self else 1
        return sw, sh


def rf_one_layer(pos: tuple[int, int], layer: LayerSpec,
                 out_size: tuple[int, int] | None = None) -> BBox:
    """Receptive field of output position ``(x, y)`` in the layer's input.

    ``out_size`` is the layer's (H, W) output extent, used for validation only.
    """
    x, y = pos
    if out_size is not None:
        ho, wo = out_size
        if not (1 <= x <= wo and 1 <= y <= ho):
            raise GeometryError(f"position {(x, y)} outside output extents {wo}x{ho} (W x H)")
    kw, kh = layer.kernel
    sw, sh = layer.stride
    pw, ph = layer.pad
    return BBox(
        x_min=(x - 1) * sw + 1 - pw,
        x_max=(x - 1) * sw - pw + kw,
        y_min=(y - 1) * sh + 1 - ph,
        y_max=(y - 1) * sh - ph + kh,
    )


def receptive_field(pos: tuple[int, int], stack: Sequence[LayerSpec],
                    input_size: tuple[int, int] | None = None) -> BBox:
    """Expand a top-layer position down to an unclipped input-image bbox."""
    if input_size is not None:
        top = LayerStack(stack).output_size(input_size)
        x, y = pos
        if not (1 <= x <= top[1] and 1 <= y <= top[0]):
            raise GeometryError(f"position {pos} outside final extents {top[1]}x{top[0]} (W x H)")
    box = BBox(pos[0], pos[0], pos[1], pos[1])
    for layer in reversed(stack):
        # rf_one_layer is monotone in position, so the min of mins over the
        # spanned range comes from its first cell and the max of maxes from its last
        lo = rf_one_layer((box.x_min, box.y_min), layer)
        hi = rf_one_layer((box.x_max, box.y_max), layer)
        box = BBox(lo.x_min, hi.x_max, lo.y_min, hi.y_max)
    return box


def feature_center(j: int, stack: Sequence[LayerSpec], input_size: tuple[int, int] | None = None,
                   row: int = 1) -> Center:
    """Center of the receptive field of final-layer column ``j`` (row ``row``)."""
    return receptive_field((j, row), stack, input_size).center


def feature_centers(stack: Sequence[LayerSpec], input_size: tuple[int, int]) -> np.ndarray:
    """(T, 2) array of (x, y) centers for every column of a height-1 top layer."""
    h, w = LayerStack(stack).output_size(input_size)
    out = np.empty((w, 2))
    for j in range(1, w + 1):
        c = feature_center(j, stack, row=1)
        out[j - 1] = (c.x, c.y)
    return out


def attention_center(alpha, centers) -> Center:
    """Alpha-weighted average of per-feature centers."""
    a = np.asarray(alpha, dtype=float)
    c = np.asarray([(p.x, p.y) if isinstance(p, Center) else p for p in centers], dtype=float)
    if c.ndim == 1:
        c = np.stack([c, np.zeros_like(c)], axis=1)
    if a.shape[0] != c.shape[0]:
        raise GeometryError(f"alpha length {a.shape[0]} != centers length {c.shape[0]}")
    if abs(a.sum() - 1.0) > 1e-6:
        raise GeometryError(f"alpha must sum to 1 (got {a.sum():.8f})")
    x, y = a @ c
    return Center(float(x), float(y))


def to_zero_based(c: Center) -> Center:
    return Center(c.x - 1.0, c.y - 1.0)


def round_half_up(v) -> np.ndarray:
    # snap float noise first: an alpha-weighted sum of x.5 centers must still round up
    return np.floor(np.round(np.asarray(v, dtype=float), 9) + 0.5).astype(np.int64)


def window_origin(cx, cy, ph: int, pw: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-left (x, y) of a ph x pw window centered at round-half-up of (cx, cy).

    Works in whatever index base the center is given in.
    """
    return round_half_up(cx) - pw // 2, round_half_up(cy) - ph // 2


def crop_windows(fmap: Tensor, x0, y0, ph: int, pw: int) -> Tensor:
    """Crop ph x pw windows from N x C x H x W maps at 0-indexed origins.

    Cells outside the map are zero.  Differentiable w.r.t. ``fmap``; window
    placement is treated as constant.  Returns N x C x ph x pw.
    """
    f = fmap.data
    n, c, h, w = f.shape
    x0 = np.asarray(x0, dtype=np.int64).reshape(n)
    y0 = np.asarray(y0, dtype=np.int64).reshape(n)
    rows = y0[:, None] + np.arange(ph)[None, :]
    cols = x0[:, None] + np.arange(pw)[None, :]
    rmask = (rows >= 0) & (rows < h)
    cmask = (cols >= 0) & (cols < w)
    rc = np.clip(rows, 0, h - 1)
    cc = np.clip(cols, 0, w - 1)
    mask = (rmask[:, :, None] & cmask[:, None, :]).astype(float)  # N x ph x pw
    bidx = np.arange(n)[:, None, None]
    # advanced indices (batch, rows, cols) broadcast to N x ph x pw, channel axis appended
    gathered = f.transpose(0, 2, 3, 1)[bidx, rc[:, :, None], cc[:, None, :]]
    out = (gathered * mask[..., None]).transpose(0, 3, 1, 2)

    def bw(g):
        gf = np.zeros((n, h, w, c))
        np.add.at(gf, (bidx, rc[:, :, None], cc[:, None, :]), g.transpose(0, 2, 3, 1) * mask[..., None])
        return (gf.transpose(0, 3, 1, 2),)

    return make_result(np.ascontiguousarray(out), (fmap,), bw)


def crop_patch(fmap, center: Center, ph: int, pw: int) -> tuple[Tensor, tuple[int, int]]:
    """Crop a ph x pw patch from C x H x W maps around a 1-indexed center.

    Returns the patch and the window's top-left (x, y) in 1-indexed input
    coordinates.
    """
    if ph < 1 or pw < 1:
        raise GeometryError("crop size must be positive")
    t = fmap if isinstance(fmap, Tensor) else Tensor(fmap)
    if t.ndim != 3:
        raise GeometryError(f"crop_patch expects C x H x W maps, got {t.shape}")
    x0, y0 = window_origin(center.x, center.y, ph, pw)
    from .adcore.ops import reshape
    patch = crop_windows(reshape(t, (1,) + t.shape), [x0 - 1], [y0 - 1], ph, pw)
    return reshape(patch, patch.shape[1:]), (int(x0), int(y0))


# --- text format ---------------------------------------------------------------

_PAIR = re.compile(r"^(\d+)x(\d+)$")


def _parse_pair(tok: str, lineno: int) -> tuple[int, int]:
    m = _PAIR.match(tok)
    if not m:
        raise StackParseError(lineno, f"expected AxB, got {tok!r}")
    return int(m.group(1)), int(m.group(2))


def parse_stack(text: str) -> tuple[LayerStack, tuple[int, int] | None]:
    """Parse a stack description.

    Lines (``#`` starts a comment)::

        input height=32 width=256
        conv kernel=3x3 stride=1x1 pad=1x1
        pool kernel=2x2 stride=1x2 pad=1x0
        preset paper

    Pairs are W x H.  ``preset NAME`` splices in a named encoder geometry.
    Returns the stack and the (H, W) input size when declared.
    """
    layers = LayerStack()
    input_size = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "preset":
            if len(rest) != 1:
                raise StackParseError(lineno, "preset takes exactly one name")
            from .encoder import preset
            try:
                cfg = preset(rest[0])
            except KeyError as exc:
                raise StackParseError(lineno, str(exc)) from None
            layers.extend(cfg.geometry())
            if input_size is None:
                input_size = cfg.input_size
            continue
        fields = {}
        for tok in rest:
            if "=" not in tok:
                raise StackParseError(lineno, f"expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            fields[k] = v
        if head == "input":
            try:
                input_size = (int(fields.pop("height")), int(fields.pop("width")))
            except (KeyError, ValueError):
                raise StackParseError(lineno, "input needs integer height= and width=") from None
            if fields:
                raise StackParseError(lineno, f"unknown keys {sorted(fields)}")
            continue
        if head not in ("conv", "pool"):
            raise StackParseError(lineno, f"unknown layer kind {head!r}")
        if "kernel" not in fields:
            raise StackParseError(lineno, "missing kernel=")
        kernel = _parse_pair(fields.pop("kernel"), lineno)
        stride = _parse_pair(fields.pop("stride", "1x1"), lineno)
        pad = _parse_pair(fields.pop("pad", "0x0"), lineno)
        if fields:
            raise StackParseError(lineno, f"unknown keys {sorted(fields)}")
        try:
            layers.append(LayerSpec(head, kernel, stride, pad))
        except GeometryError as exc:
            raise StackParseError(lineno, str(exc)) from None
    return layers, input_size


def format_stack(stack: Sequence[LayerSpec], input_size: tuple[int, int] | None = None) -> str:
    lines = []
    if input_size is not None:
        lines.append(f"input height={input_size[0]} width={input_size[1]}")
    lines.extend(l.describe() for l in stack)
    return "\n".join(lines) + "\n"
