"""Reverse-mode automatic differentiation over dense numpy arrays.

Model state is float32 by convention; every op is dtype-generic so the
finite-difference checker can run the identical computation in float64.
The recorded graph (the tape) lives on the output tensors themselves:
each non-leaf tensor keeps its parent tensors and a vector-Jacobian
closure. ``backward`` walks the tape once; walking the same tape again
without re-recording the forward pass raises ``TapeError``.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "TapeError",
    "backward",
    "no_grad",
    "is_grad_enabled",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class TapeError(RuntimeError):
    """The recorded graph was used in an invalid way (e.g. double backward)."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the context (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """Dense tensor with optional gradient tracking.

    ``data`` is a row-major numpy array (float32 unless another dtype is
    requested). ``requires_grad`` marks trainable leaves; tensors produced
    by ops carry the tape through ``_parents`` and ``_vjp``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def is_leaf(self) -> bool:
        return self._vjp is None

    def in_graph(self) -> bool:
        """True if backward could deposit or route a gradient through this tensor."""
        return self.requires_grad or self._vjp is not None

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def assert_finite(self, context: str = "tensor") -> None:
        if not self.all_finite():
            raise FloatingPointError(f"{context} contains NaN/Inf values")

    def detach(self) -> "Tensor":
        """Copy of the data with no tape attached."""
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        if not self.is_leaf():
            flags.append("non-leaf")
        tag = ", ".join([f"shape={self.shape}"] + flags)
        return f"Tensor({tag})"

    # Minimal operator sugar; the functional API in ops.py is primary.
    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.mul(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.sub(self, other)


def make_node(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, recording the tape when tracking is on."""
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.in_graph() for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    The loss must be scalar. Each recorded tape may be replayed once;
    leaves the loss does not depend on keep ``grad is None`` (reads as
    zero). Frozen leaves (``requires_grad=False``) receive no gradient.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise TapeError("this tape was already replayed; re-record the forward pass")

    # Iterative postorder so deep graphs do not hit the recursion limit.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        if node._consumed:
            raise TapeError("tape overlaps a graph that was already replayed")
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p._vjp is not None:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        node._consumed = True
        if node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.in_graph():
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g
        node._vjp = None  # release closure memory; _consumed still blocks reuse
