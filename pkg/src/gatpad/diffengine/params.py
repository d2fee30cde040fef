"""Named parameter collections and seeded initializers."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["ParamSet", "glorot_uniform", "zeros"]


class ParamSet:
    """Ordered map from parameter path to tensor, each trainable or frozen.

    Trainability is mirrored onto ``tensor.requires_grad``, so frozen
    entries never accumulate gradients and never move under the optimizer.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor.requires_grad = trainable
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"unknown parameter: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self):
        return iter(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def is_trainable(self, name: str) -> bool:
        return self[name].requires_grad

    def trainable_items(self):
        return ((n, t) for n, t in self._tensors.items() if t.requires_grad)

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def num_scalars(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of all parameter arrays, e.g. to compare against later."""
        return {n: t.data.copy() for n, t in self._tensors.items()}


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int, dtype=np.float32) -> Tensor:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return Tensor(rng.uniform(-limit, limit, size=shape), dtype=dtype)


def zeros(shape: tuple[int, ...], dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape), dtype=dtype)
