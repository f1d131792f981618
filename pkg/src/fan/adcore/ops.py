"""Differentiable primitives.

Every function takes and returns :class:`Tensor`.  Operations broadcast like
numpy and accept an optional leading batch axis where noted.  Pairs such as
``stride`` and ``pad`` are given in (H, W) order.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import DTYPE, ShapeError, Tensor, as_tensor, make_result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_finite(x: Tensor, opname: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise ValueError(f"{opname}: non-finite input")


# --- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b),
                       lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return make_result(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(np.log(xd), (x,), lambda g: (g / xd,))


def tanh(x: Tensor) -> Tensor:
    _check_finite(x, "tanh")
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    _check_finite(x, "sigmoid")
    xd = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(xd))
    y = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_finite(x, "log_softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return make_result(y, (x,), bw)


# --- reductions and shape ------------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_result(np.asarray(y), (x,), bw)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def index(x: Tensor, idx) -> Tensor:
    shape = x.shape

    parts = idx if isinstance(idx, tuple) else (idx,)
    advanced = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def bw(g):
        out = np.zeros(shape)
        if advanced:
            np.add.at(out, idx, g)
        else:
            out[idx] = g
        return (out,)

    return make_result(x.data[idx], (x,), bw)


def concat(xs, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return make_result(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                       lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return make_result(np.stack([x.data for x in xs], axis=axis), tuple(xs), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError("matmul expects operands with at least 2 dimensions")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimension mismatch: {ad.shape[-1]} vs {bd.shape[-2]}")

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return make_result(ad @ bd, (a, b), bw)


# --- layers --------------------------------------------------------------------

def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``W @ x + b`` for ``x`` of shape (..., n), ``W`` (m, n), ``b`` (m,)."""
    if w.ndim != 2:
        raise ShapeError(f"affine weight must be 2-D, got shape {w.shape}")
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"affine input dimension {x.shape[-1]} != weight columns {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"affine bias shape {b.shape} != ({w.shape[0]},)")
    xd, wd = x.data, w.data

    def bw(g):
        gx = g @ wd
        gw = g.reshape(-1, g.shape[-1]).T @ xd.reshape(-1, xd.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gw, gb

    return make_result(xd @ wd.T + b.data, (x, w, b), bw)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return v, v
    a, b = v
    return int(a), int(b)


def out_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    """Output extent of a conv/pool window sweep (floor division)."""
    return (size + 2 * pad - kernel) // stride + 1


def _batched(x: Tensor, opname: str) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ShapeError(f"{opname}: input must be C x H x W or N x C x H x W, got {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=1, pad=0) -> Tensor:
    """2-D cross-correlation with zero padding."""
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    xd, single = _batched(x, "conv2d")
    n, c, h, wid = xd.shape
    if w.ndim != 4:
        raise ShapeError(f"conv2d weights must be C_o x C_i x k_H x k_W, got {w.shape}")
    co, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d input channels {c} != weight input channels {ci}")
    if b.shape != (co,):
        raise ShapeError(f"conv2d bias shape {b.shape} != ({co},)")
    if h + 2 * ph < kh:
        raise ShapeError(f"conv2d height: padded height {h + 2 * ph} < kernel height {kh}")
    if wid + 2 * pw < kw:
        raise ShapeError(f"conv2d width: padded width {wid + 2 * pw} < kernel width {kw}")
    if sh < 1 or sw < 1:
        raise ShapeError("conv2d stride must be >= 1")
    ho, wo = out_extent(h, kh, sh, ph), out_extent(wid, kw, sw, pw)
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xd
    xp = np.ascontiguousarray(xp)
    hp, wp = xp.shape[2:]
    cols = kernels.backend.im2col(xp, kh, kw, sh, sw, ho, wo)
    wmat = w.data.reshape(co, -1)
    y = np.matmul(wmat, cols) + b.data[:, None]
    y = y.reshape(n, co, ho, wo)

    def bw(g):
        g2 = g.reshape(n, co, ho * wo)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gb = g2.sum(axis=(0, 2))
        gcols = np.ascontiguousarray(np.matmul(wmat.T, g2))
        gxp = kernels.backend.col2im(gcols, n, c, hp, wp, kh, kw, sh, sw, ho, wo)
        gx = gxp[:, :, ph : ph + h, pw : pw + wid]
        return (gx[0] if single else gx), gw, gb

    return make_result(y[0] if single else y, (x, w, b), bw)


def maxpool2d(x: Tensor, kernel=2, stride=2, pad=0) -> Tensor:
    """Max pooling; padded cells act as -inf and gradient goes to the first argmax."""
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    xd, single = _batched(x, "maxpool2d")
    n, c, h, wid = xd.shape
    if h + 2 * ph < kh or wid + 2 * pw < kw:
        raise ShapeError(f"maxpool2d window {kh}x{kw} larger than padded input {h + 2 * ph}x{wid + 2 * pw}")
    ho, wo = out_extent(h, kh, sh, ph), out_extent(wid, kw, sw, pw)
    if ph or pw:
        xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf)
    else:
        xp = xd
    xp = np.ascontiguousarray(xp)
    hp, wp = xp.shape[2:]
    y, arg = kernels.backend.maxpool_forward(xp, kh, kw, sh, sw, ho, wo)

    def bw(g):
        g4 = np.ascontiguousarray(g.reshape(n, c, ho, wo))
        gxp = kernels.backend.maxpool_backward(g4, arg, n, c, hp, wp)
        gx = gxp[:, :, ph : ph + h, pw : pw + wid]
        return (gx[0] if single else gx,)

    return make_result(y[0] if single else y, (x,), bw)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Negative log-probability of ``target`` under ``softmax(logits)``.

    ``logits`` is (..., K) and ``target`` an int or int array of shape (...).
    The result has shape (...) (a scalar for a single distribution).
    """
    _check_finite(logits, "cross_entropy")
    k = logits.shape[-1]
    t = np.asarray(target, dtype=np.int64)
    if t.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy target shape {t.shape} != logits batch shape {logits.shape[:-1]}")
    if np.any(t < 0) or np.any(t >= k):
        raise ValueError(f"cross_entropy target out of range [0, {k})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    loss = -np.take_along_axis(logp, t[..., None], axis=-1)[..., 0]

    def bw(g):
        p = np.exp(logp)
        np.put_along_axis(p, t[..., None], np.take_along_axis(p, t[..., None], axis=-1) - 1.0, axis=-1)
        return (p * np.asarray(g)[..., None],)

    return make_result(loss, (logits,), bw)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, params) -> tuple[Tensor, Tensor]:
    """One LSTM update.

    ``params`` holds ``w_x`` (4H x n_in), ``w_h`` (4H x H), ``b`` (4H,), gate
    blocks ordered input, forget, candidate, output.  Works on (n_in,) or
    batched (N, n_in) inputs.
    """
    w_x, w_h, b = params["w_x"], params["w_h"], params["b"]
    hid = w_h.shape[1]
    if w_x.shape[0] != 4 * hid or w_h.shape[0] != 4 * hid:
        raise ShapeError(f"lstm_cell gate rows must be 4*{hid}")
    if h_prev.shape[-1] != hid or c_prev.shape[-1] != hid:
        raise ShapeError(f"lstm_cell state extent {h_prev.shape[-1]}/{c_prev.shape[-1]} != hidden {hid}")
    if x.shape[-1] != w_x.shape[1]:
        raise ShapeError(f"lstm_cell input extent {x.shape[-1]} != {w_x.shape[1]}")
    z = affine(x, w_x, b) + matmul_vec(h_prev, w_h)
    i = sigmoid(z[..., :hid])
    f = sigmoid(z[..., hid : 2 * hid])
    g = tanh(z[..., 2 * hid : 3 * hid])
    o = sigmoid(z[..., 3 * hid :])
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c


def matmul_vec(x: Tensor, w: Tensor) -> Tensor:
    """``x @ W.T`` for (..., n) inputs without a bias."""
    xd, wd = x.data, w.data

    def bw(g):
        return g @ wd, g.reshape(-1, g.shape[-1]).T @ xd.reshape(-1, xd.shape[-1])

    return make_result(xd @ wd.T, (x, w), bw)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=DTYPE))
