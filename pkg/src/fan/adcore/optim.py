"""ADADELTA (Zeiler, 2012) over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class AdadeltaState:
    rho: float = 0.9
    eps: float = 1e-6
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def adadelta_step(params: dict[str, Tensor], state: AdadeltaState,
                  grads: dict[str, np.ndarray] | None = None) -> None:
    """Apply one in-place update to every parameter.

    Gradients default to each tensor's ``.grad``; a missing gradient counts as zero.
    """
    rho, eps = state.rho, state.eps
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        eg = state.sq_grad.get(name)
        if eg is None:
            eg = state.sq_grad[name] = np.zeros_like(p.data)
            state.sq_delta[name] = np.zeros_like(p.data)
        ed = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        p.data += delta
    state.step += 1
