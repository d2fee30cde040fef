"""Central finite-difference verification of analytic gradients.

All checks run in float64: at step h=1e-5 the truncation error of the
central difference is around 1e-10 relative, far below the 1e-4 gate,
so a failure means the backward formula is wrong rather than noisy.
Inputs for kinked ops (relu family) are sampled away from zero.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward

__all__ = ["numeric_grad", "max_rel_error", "check_grads"]


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Per-coordinate central difference of a scalar-valued function."""
    x = x.astype(np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest deviation normalized by the largest gradient magnitude.

    The scale is floored at 1e-4: gradients below that are dominated by
    the difference quotient's own roundoff (about 1e-11 times the function
    value), so an all-zero analytic gradient correctly matches the noise
    the central difference reports.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-4)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_grads(build: Callable[..., Tensor], inputs: dict[str, np.ndarray],
                wrt: list[str] | None = None, h: float = 1e-5) -> float:
    """Compare backward against finite differences for a scalar-valued graph.

    ``build`` receives one float64 Tensor per entry of ``inputs`` (as
    keyword arguments) and must return a scalar Tensor. Returns the worst
    relative error over the checked inputs.
    """
    wrt = list(inputs) if wrt is None else wrt

    def run(**arrays: np.ndarray) -> dict[str, Tensor]:
        tensors = {k: Tensor(v, requires_grad=(k in wrt), dtype=np.float64)
                   for k, v in arrays.items()}
        return tensors

    tensors = run(**inputs)
    loss = build(**tensors)
    backward(loss)

    worst = 0.0
    for name in wrt:
        analytic = tensors[name].grad
        if analytic is None:
            analytic = np.zeros_like(inputs[name], dtype=np.float64)

        def f(x: np.ndarray, _name: str = name) -> float:
            arrays = {k: (x if k == _name else v) for k, v in inputs.items()}
            return build(**run(**arrays)).item()

        numeric = numeric_grad(f, np.array(inputs[name], dtype=np.float64), h=h)
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst
