"""Pure-numpy convolution and pooling kernels (fallback for the compiled core).

All inputs are already zero/-inf padded, laid out (N, C, Hp, Wp), float64.
Accumulation order matches ``_ckernels.pyx`` so both paths are bit-identical.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def im2col(xp, kh, kw, sh, sw, ho, wo):
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
    # (N, C, Ho, Wo, kh, kw) -> (N, C, kh, kw, Ho, Wo)
    cols = win.transpose(0, 1, 4, 5, 2, 3)
    return np.ascontiguousarray(cols).reshape(n, c * kh * kw, ho * wo)


def col2im(cols, n, c, hp, wp, kh, kw, sh, sw, ho, wo):
    out = np.zeros((n, c, hp, wp))
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw] += cols[:, :, i, j]
    return out


def maxpool_forward(xp, kh, kw, sh, sw, ho, wo):
    """Return pooled values and the flat (row-major, padded) argmax index of each window."""
    n, c, hp, wp = xp.shape
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
    flat = win.reshape(n, c, ho, wo, kh * kw)
    k = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, k[..., None], axis=-1)[..., 0]
    di, dj = np.divmod(k, kw)
    rows = np.arange(ho)[:, None] * sh + di
    colsx = np.arange(wo)[None, :] * sw + dj
    arg = (rows * wp + colsx).astype(np.int64)
    return np.ascontiguousarray(out), arg


def maxpool_backward(gout, arg, n, c, hp, wp):
    out = np.zeros((n * c, hp * wp))
    idx = arg.reshape(n * c, -1)
    g = gout.reshape(n * c, -1)
    rows = np.repeat(np.arange(n * c), idx.shape[1])
    np.add.at(out, (rows, idx.ravel()), g.ravel())
    return out.reshape(n, c, hp, wp)
