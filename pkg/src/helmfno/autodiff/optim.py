"""AdamW with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter


@dataclass
class OptimizerState:
    lr: float = 1.6e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class AdamW:
    def __init__(self, params: dict[str, Parameter], lr: float = 1.6e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        names = [p.name for p in params.values()]
        if len(set(names)) != len(names):
            raise ValueError("parameter registered more than once")
        self.params = dict(params)
        self.state = OptimizerState(lr, betas[0], betas[1], eps, weight_decay)
        for name, p in self.params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None):
        st = self.state
        lr = st.lr if lr is None else lr
        missing = [n for n, p in self.params.items() if p.grad is None]
        if missing:
            raise RuntimeError(f"missing gradients for {', '.join(missing[:5])}")
        st.step += 1
        bc1 = 1.0 - st.beta1 ** st.step
        bc2 = 1.0 - st.beta2 ** st.step
        for name, p in self.params.items():
            g = p.grad
            m, v = st.m[name], st.v[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            p.data *= p.data.dtype.type(1.0 - lr * st.weight_decay)
            denom = np.sqrt(v / bc2) + st.eps
            p.data -= (lr / bc1) * m / denom
