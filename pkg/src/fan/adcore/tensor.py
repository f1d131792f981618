"""Dense float64 tensors with a tape-based reverse-mode differentiation graph.

Every operation whose inputs require gradients appends a node to the active
:class:`Graph`.  :func:`backward` replays that record in exact reverse order.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand extents are incompatible with an operation."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # arithmetic sugar; the real work lives in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.index(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], backward_fn: Callable):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Graph:
    """Ordered record of executed operations."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self.nodes.append(_Node(out, parents, backward_fn))

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


class _State(threading.local):
    def __init__(self):
        self.graph = Graph()
        self.enabled = True


_state = _State()


def current_graph() -> Graph:
    return _state.graph


def grad_enabled() -> bool:
    return _state.enabled


@contextlib.contextmanager
def no_grad():
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextlib.contextmanager
def fresh_graph():
    """Run a block against a private graph, restoring the outer one afterwards."""
    prev = _state.graph
    _state.graph = Graph()
    try:
        yield _state.graph
    finally:
        _state.graph = prev


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op result and record it when any parent needs a gradient.

    ``backward_fn(g)`` receives the output gradient and returns one gradient
    (or None) per parent, in order.
    """
    out = Tensor(data)
    if _state.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _state.graph.record(out, tuple(parents), backward_fn)
    return out


def backward(loss: Tensor, params: Iterable[Tensor] | None = None,
             retain_graph: bool = False) -> None:
    """Populate ``.grad`` on every requires-grad tensor reachable from ``loss``.

    Leaf gradients accumulate by summation across calls; callers zero them
    between optimizer steps.  Tensors in ``params`` that the loss does not
    reach receive an all-zero gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = _state.graph
    nodes = graph.nodes
    pos = None
    for i in range(len(nodes) - 1, -1, -1):
        if nodes[i].out is loss:
            pos = i
            break

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    interior: dict[int, Tensor] = {}
    if pos is not None:
        for node in reversed(nodes[: pos + 1]):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            node.out.grad = g
            pgrads = node.backward_fn(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                    interior[key] = p
    elif not loss.requires_grad:
        raise ValueError("loss is not connected to any tensor that requires grad")

    # whatever is left over belongs to leaves (tensors produced outside the graph)
    for key, g in grads.items():
        t = loss if key == id(loss) else interior[key]
        if t is loss and pos is not None:
            continue
        if t.grad is None:
            t.grad = g.reshape(t.shape).copy()
        else:
            t.grad = t.grad + g.reshape(t.shape)

    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
    if not retain_graph:
        graph.clear()


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
