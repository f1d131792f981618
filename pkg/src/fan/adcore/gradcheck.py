"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, fresh_graph, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, step: float = 1e-5,
                 max_entries: int | None = None, rng: np.random.Generator | None = None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``t``.

    With ``max_entries`` only a random subset of entries is probed; returns
    (flat indices, derivatives).
    """
    flat = t.data.reshape(-1)
    idx = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        rng = rng or np.random.default_rng(0)
        idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
    out = np.empty(idx.size)
    with no_grad():
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            fp = fn().item()
            flat[i] = orig - step
            fm = fn().item()
            flat[i] = orig
            out[k] = (fp - fm) / (2 * step)
    return idx, out


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5,
                    max_entries: int | None = None, seed: int = 0) -> float:
    """Max relative error between backprop and finite differences over ``tensors``."""
    for t in tensors:
        t.grad = None
    with fresh_graph():
        loss = fn()
        backward(loss, params=tensors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        idx, num = numeric_grad(fn, t, step=step, max_entries=max_entries, rng=rng)
        ana = t.grad.reshape(-1)[idx]
        worst = max(worst, relative_error(ana, num))
    return worst
