"""Minimal reverse-mode differentiation over numpy arrays."""
from .optim import AdamW, OptimizerState
from .tensor import Parameter, Tensor, as_tensor, backward, grad_enabled, no_grad

__all__ = ["AdamW", "OptimizerState", "Parameter", "Tensor", "as_tensor", "backward",
           "grad_enabled", "no_grad"]
