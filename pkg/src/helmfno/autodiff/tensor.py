"""Tensor node and reverse traversal.

Complex tensors carry gradients in the packed form ``dL/dRe + 1j * dL/dIm``
(the loss is always real), which keeps every backward rule a plain
conjugate-linear formula.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the rules live in ops
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
        return ops.scale(self, -1.0)

    def __getitem__(self, idx):
        from . import ops
        return ops.index(self, idx)

    def backward(self, grad=None):
        backward(self, grad)


class Parameter(Tensor):
    """Trainable leaf with a stable checkpoint name."""

    __slots__ = ()

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data), requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def make_node(data, parents, backward_fn) -> Tensor:
    """Wrap an op result, recording the graph only when some input needs it."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    return out


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        s = state.get(key)
        if s == 2:
            continue
        if s == 1:
            raise RuntimeError("cycle detected in computation graph")
        state[key] = 1
        stack.append((node, True))
        for p in node.parents:
            ps = state.get(id(p))
            if ps == 1:
                raise RuntimeError("cycle detected in computation graph")
            if ps is None and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad=None):
    """Reverse-mode sweep from ``loss``; leaf gradients accumulate across calls."""
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any tensor requiring grad")
    if grad is None:
        if loss.data.size != 1:
            raise RuntimeError("backward without a seed needs a scalar loss")
        grad = np.ones_like(loss.data)
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=loss.data.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg
