"""Trainable parameters and the Adam update."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Parameter:
    """A named leaf tensor with Adam moment buffers."""

    __slots__ = ("name", "tensor", "adam_m", "adam_v")

    def __init__(self, name: str, values):
        self.name = name
        self.tensor = Tensor(values, requires_grad=True)
        self.adam_m = np.zeros_like(self.tensor.data)
        self.adam_v = np.zeros_like(self.tensor.data)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.grad = None

    def copy(self) -> "Parameter":
        dup = Parameter(self.name, self.tensor.data.copy())
        dup.adam_m = self.adam_m.copy()
        dup.adam_v = self.adam_v.copy()
        return dup

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


def adam_step(params, lr: float, t: int, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update in place; gradients are zeroed afterward.

    Parameters with no gradient this step are treated as zero-gradient.
    """
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    for p in params:
        g = p.tensor.grad
        if g is None:
            g = np.zeros_like(p.tensor.data)
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()
