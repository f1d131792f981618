"""Focusing network: per-step attention centers, patch crops, per-pixel
classification over the attention region, and the joint objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rfgeom
from .adcore import ops
from .adcore.tensor import ShapeError, Tensor
from .attn import StepTrace, attention_loss

DEFAULT_LAMBDA = 0.01


class Unlabeled(Exception):
    """The sample carries no character boxes; skip its focusing loss."""


@dataclass
class FocusConfig:
    crop: tuple[int, int] = (12, 12)  # (P_H, P_W)
    source: str = "image"


class FocusParams(dict):
    """R (K x D), S (K x C), b (K,) plus crop geometry."""

    def __init__(self, *args, crop=(12, 12), source="image", **kw):
        super().__init__(*args, **kw)
        self.crop = tuple(crop)
        self.source = source


def build_focus(feature_dim: int, channels: int, num_classes: int,
                config: FocusConfig | None = None, rng_seed: int = 2) -> FocusParams:
    cfg = config or FocusConfig()
    rng = np.random.default_rng(rng_seed)

    def glorot(shape):
        lim = np.sqrt(6.0 / (shape[0] + shape[1]))
        return Tensor(rng.uniform(-lim, lim, size=shape), requires_grad=True)

    p = FocusParams(crop=cfg.crop, source=cfg.source)
    p["fn.R"] = glorot((num_classes, feature_dim))
    p["fn.S"] = glorot((num_classes, channels))
    p["fn.b"] = Tensor(np.zeros(num_classes), requires_grad=True)
    for k, v in p.items():
        v.name = k
    return p


def fn_energies(g: Tensor, patch: Tensor, params: FocusParams) -> Tensor:
    """tanh(R g + S F^(i,j) + b) for every cell: (..., P_H, P_W, K)."""
    ph, pw = params.crop
    if patch.shape[-2:] != (ph, pw):
        raise ShapeError(f"patch spatial shape {patch.shape[-2:]} != crop {(ph, pw)}")
    if patch.shape[-3] != params["fn.S"].shape[1]:
        raise ShapeError(f"patch channels {patch.shape[-3]} != S columns {params['fn.S'].shape[1]}")
    nd = patch.ndim
    cells = ops.transpose(patch, tuple(range(nd - 3)) + (nd - 2, nd - 1, nd - 3))  # (..., PH, PW, C)
    sf = ops.matmul_vec(cells, params["fn.S"])
    rg = ops.affine(g, params["fn.R"], params["fn.b"])
    rg = ops.reshape(rg, rg.shape[:-1] + (1, 1, rg.shape[-1]))
    return ops.tanh(sf + rg)


def fn_predict(g: Tensor, patch: Tensor, params: FocusParams) -> Tensor:
    """Per-cell class distribution over the crop, (..., P_H, P_W, K)."""
    return ops.softmax(fn_energies(g, patch, params), axis=-1)


def make_pixel_labels(boxes, t: int, origin: tuple[int, int], ph: int, pw: int,
                      char_class: int, background: int) -> np.ndarray:
    """Label grid for step ``t``: the character class inside its box, background elsewhere.

    ``boxes`` are 0-indexed inclusive (x0, y0, x1, y1); ``origin`` is the
    window's 0-indexed top-left (x, y).
    """
    if boxes is None:
        raise Unlabeled("sample has no character annotations")
    if not 0 <= t < len(boxes):
        raise ValueError(f"step {t} beyond the {len(boxes)} annotated characters")
    bx0, by0, bx1, by1 = boxes[t]
    ox, oy = origin
    ys = oy + np.arange(ph)
    xs = ox + np.arange(pw)
    inside = ((ys >= by0) & (ys <= by1))[:, None] & ((xs >= bx0) & (xs <= bx1))[None, :]
    return np.where(inside, char_class, background).astype(np.int64)


def step_centers(alpha: Tensor, centers: np.ndarray) -> Tensor:
    """alpha-weighted feature centers, (..., 2) in 1-indexed input coordinates."""
    return ops.matmul(alpha, Tensor(centers))


def focusing_loss(traces: Sequence[StepTrace], labels: Sequence[Sequence[int]],
                  boxes: Sequence, source: Tensor, centers: np.ndarray,
                  params: FocusParams, background: int) -> Tensor:
    """Summed per-cell negative log-likelihood over annotated steps.

    Batched form: traces hold (N, T) alphas, ``labels``/``boxes`` have one
    entry per sample (``boxes[i]`` None when unannotated), ``source`` is
    (N, C, H, W).  Returns an (N,) tensor.
    """
    n = source.shape[0]
    ph, pw = params.crop
    nchars = np.array([len(b) if b is not None else 0 for b in boxes])
    total = Tensor(np.zeros(n))
    for t, tr in enumerate(traces):
        active = nchars > t
        if not active.any():
            continue
        c = step_centers(tr.alpha, centers)  # window placement below uses values only
        x0, y0 = rfgeom.window_origin(c.data[:, 0], c.data[:, 1], ph, pw)
        x0, y0 = x0 - 1, y0 - 1  # to 0-indexed
        patch = rfgeom.crop_windows(source, x0, y0, ph, pw)
        grid = np.full((n, ph, pw), background, dtype=np.int64)
        for i in np.flatnonzero(active):
            grid[i] = make_pixel_labels(boxes[i], t, (x0[i], y0[i]), ph, pw, labels[i][t], background)
        e = fn_energies(tr.glimpse, patch, params)
        nll = ops.sum(ops.cross_entropy(e, grid), axis=(1, 2))
        total = total + nll * Tensor(active.astype(float))
    return total


def single_focusing_loss(traces, label_ids, boxes, source: Tensor, centers, params, background) -> Tensor:
    """Unbatched wrapper: one sample, ``source`` C x H x W; returns a scalar (0 if unannotated)."""
    batched = [StepTrace(ops.reshape(tr.alpha, (1,) + tr.alpha.shape),
                         ops.reshape(tr.glimpse, (1,) + tr.glimpse.shape),
                         tr.logits) for tr in traces]
    src = ops.reshape(source, (1,) + source.shape)
    out = focusing_loss(batched, [label_ids], [boxes], src, centers, params, background)
    return ops.reshape(out, ())


def fan_loss(H, targets, attn_params, focus_params: FocusParams, lam: float = DEFAULT_LAMBDA,
             boxes=None, source: Tensor | None = None, centers: np.ndarray | None = None):
    """(1 - lam) * attention loss + lam * focusing loss.

    ``targets`` are EOS-terminated id sequences (one per sample for batched
    H).  Returns (combined, attention part, focusing part); the parts are
    unweighted.  With ``lam == 0`` the focusing branch is not evaluated and
    the combined loss is the attention loss itself.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    l_att, traces = attention_loss(H, targets, attn_params)
    if lam == 0.0:
        return l_att, l_att, None
    eos = attn_params.num_classes - 1
    vectors = H.vectors if hasattr(H, "vectors") else H
    if centers is None:
        centers = H.centers
    if vectors.ndim == 2:
        if boxes is None:
            l_focus = Tensor(np.zeros(()))
        else:
            l_focus = single_focusing_loss(traces, list(targets), boxes, source, centers, focus_params, eos)
    else:
        if boxes is None:
            boxes = [None] * vectors.shape[0]
        l_focus = focusing_loss(traces, targets, boxes, source, centers, focus_params, eos)
    combined = l_att * (1.0 - lam) + l_focus * lam
    return combined, l_att, l_focus


def center_errors(alphas: Sequence[np.ndarray], centers: np.ndarray, boxes) -> list[float]:
    """Euclidean distance, in pixels, from each step's attention center to its box center.

    ``alphas`` are per-step (T,) weights of one sample; steps beyond the
    annotated characters are ignored.  Both sides are compared in 0-indexed
    pixel coordinates.
    """
    out = []
    for t, a in enumerate(alphas[: len(boxes)]):
        cx, cy = np.asarray(a) @ centers - 1.0
        x0, y0, x1, y1 = boxes[t]
        out.append(float(np.hypot(cx - (x0 + x1) / 2.0, cy - (y0 + y1) / 2.0)))
    return out
