"""Adam optimizer with classic L2-in-gradient weight decay."""

from __future__ import annotations

import numpy as np

from .params import ParamSet
from .tensor import ShapeError

__all__ = ["Adam", "adam_update"]


def adam_update(w, g, m, v, t, lr, weight_decay, beta1, beta2, eps):
    """One Adam step with bias correction; returns (w', m', v').

    Weight decay enters as an L2 term added to the gradient before the
    moment updates (not the decoupled variant). ``t`` is the 1-based step
    index; moments start at zero.
    """
    if t < 1:
        raise ValueError(f"adam_update: step index must be >= 1, got {t}")
    if weight_decay != 0.0:
        g = g + weight_decay * w
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    w = w - lr * mhat / (np.sqrt(vhat) + eps)
    return w, m, v


class Adam:
    """Holds per-parameter moments for the trainable entries of a ParamSet."""

    def __init__(self, params: ParamSet, lr: float = 1e-4, weight_decay: float = 5e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {n: np.zeros_like(t.data) for n, t in params.trainable_items()}
        self._v = {n: np.zeros_like(t.data) for n, t in params.trainable_items()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        """Update every trainable parameter in place.

        Gradients default to the ``.grad`` accumulated by backward; a
        missing gradient reads as zero (the parameter still feels weight
        decay). Frozen parameters are never touched.
        """
        self.t += 1
        for name, p in self.params.trainable_items():
            if grads is not None:
                g = grads.get(name)
            else:
                g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            g = np.asarray(g, dtype=p.data.dtype)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
            p.data, self._m[name], self._v[name] = adam_update(
                p.data, g, self._m[name], self._v[name], self.t,
                self.lr, self.weight_decay, self.beta1, self.beta2, self.eps,
            )
