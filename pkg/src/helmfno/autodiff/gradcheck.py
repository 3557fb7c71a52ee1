"""Central finite-difference gradient checks (double precision)."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(loss_fn, t: Tensor, eps: float = 1e-6, entries=None) -> np.ndarray:
    """Finite-difference gradient of ``loss_fn()`` w.r.t. ``t.data``.

    For complex tensors the result is packed as ``d/dRe + 1j d/dIm``.
    ``entries`` restricts the probe to flat indices (others stay 0).
    """
    data = t.data
    flat = data.reshape(-1)
    out = np.zeros_like(flat)
    idxs = range(flat.size) if entries is None else entries
    for i in idxs:
        orig = flat[i]
        parts = [1.0, 1j] if np.iscomplexobj(data) else [1.0]
        for unit in parts:
            flat[i] = orig + eps * unit
            lp = float(loss_fn().data)
            flat[i] = orig - eps * unit
            lm = float(loss_fn().data)
            flat[i] = orig
            out[i] += unit * (lp - lm) / (2 * eps)
    return out.reshape(data.shape)


def analytic_grad(loss_fn, tensors) -> list[np.ndarray]:
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    backward(loss_fn())
    return [t.grad.copy() for t in tensors]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


def check(loss_fn, tensors, eps: float = 1e-6, entries=None) -> float:
    """Worst relative error between analytic and numeric gradients."""
    ana = analytic_grad(loss_fn, tensors)
    worst = 0.0
    for t, ga in zip(tensors, ana):
        gn = numeric_grad(loss_fn, t, eps, None if entries is None else entries.get(t.name or id(t)))
        if entries is not None and (t.name or id(t)) in entries:
            sel = np.zeros(ga.size, dtype=bool)
            sel[entries[t.name or id(t)]] = True
            ga = ga.reshape(-1)[sel]
            gn = gn.reshape(-1)[sel]
        worst = max(worst, relative_error(ga, gn))
    return worst
