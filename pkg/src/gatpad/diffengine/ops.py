"""Differentiable tensor primitives.

Every function takes ``Tensor`` operands, validates shapes eagerly, and
returns a ``Tensor`` wired into the tape. Convolutions are fixed to 3x3
kernels with zero padding 1 and stride 1 or 2, the only variant the
models here need. There is no general broadcasting: elementwise ops
require identical shapes, and bias addition is folded into ``linear``
and ``conv2d``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, make_node

__all__ = [
    "matmul",
    "transpose",
    "linear",
    "conv2d",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "leaky_relu",
    "exp",
    "log",
    "avg_pool",
    "adaptive_avg_pool",
    "concat",
    "flatten",
    "reshape",
    "take_row",
    "stack_rows",
    "sum_all",
    "mean_all",
    "softmax_masked",
    "cross_entropy",
]


def _check_same_dtype(*tensors: Tensor) -> None:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(f"mixed dtypes in one op: {sorted(str(d) for d in dtypes)}")


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D ``a`` [m, k] and 2-D ``b`` [k, n]."""
    _check_same_dtype(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return g @ bd.T, ad.T @ g

    return make_node(ad @ bd, (a, b), vjp)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {x.shape}")

    def vjp(g):
        return (g.T.copy(),)

    return make_node(x.data.T.copy(), (x,), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w.T + b`` for ``x`` of shape [f] or [batch, f].

    ``w`` has shape [out, f]; ``b``, when given, has shape [out].
    """
    _check_same_dtype(*([x, w] + ([b] if b is not None else [])))
    if w.ndim != 2:
        raise ShapeError(f"linear: weight must be 2-D, got {w.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    xd, wd = x.data, w.data
    single = x.ndim == 1
    out = xd @ wd.T
    if b is not None:
        out = out + b.data

    def vjp(g):
        if single:
            dx = g @ wd
            dw = np.outer(g, xd)
            db = g if b is not None else None
        else:
            dx = g @ wd
            dw = g.T @ xd
            db = g.sum(axis=0) if b is not None else None
        return (dx, dw) if b is None else (dx, dw, db)

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, vjp)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Cross-correlation with 3x3 kernels, zero padding 1, stride 1 or 2.

    ``x`` is [c, h, w] or [batch, c, h, w] with h, w >= 3; ``kernels`` is
    [o, c, 3, 3]. The output spatial size is ceil(h / stride).
    """
    _check_same_dtype(*([x, kernels] + ([bias] if bias is not None else [])))
    if stride not in (1, 2):
        raise ShapeError(f"conv2d: stride must be 1 or 2, got {stride}")
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: kernels must be [o, c, 3, 3], got {kernels.shape}")
    single = x.ndim == 3
    if x.ndim not in (3, 4):
        raise ShapeError(f"conv2d: input must be 3-D or 4-D, got {x.shape}")
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    o = kernels.shape[0]
    if kernels.shape[1] != c:
        raise ShapeError(f"conv2d: kernel channels {kernels.shape[1]} != input channels {c}")
    if h < 3 or w < 3:
        raise ShapeError(f"conv2d: spatial dims must be >= 3, got {h}x{w}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d: bias {bias.shape} incompatible with {o} kernels")

    xp = np.pad(xd, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * 9)
    kmat = kernels.data.reshape(o, c * 9)
    out = (cols @ kmat.T).reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    if single:
        out = out[0]

    def vjp(g):
        g4 = g[None] if single else g
        gmat = g4.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        dk = (gmat.T @ cols).reshape(o, c, 3, 3)
        dcols = gmat @ kmat
        dwin = dcols.reshape(n, oh, ow, c, 3, 3)
        dxp = np.zeros_like(xp)
        for ki in range(3):
            for kj in range(3):
                dxp[:, :, ki : ki + stride * (oh - 1) + 1 : stride,
                    kj : kj + stride * (ow - 1) + 1 : stride] += dwin[..., ki, kj].transpose(0, 3, 1, 2)
        dx = dxp[:, :, 1 : 1 + h, 1 : 1 + w]
        if single:
            dx = dx[0]
        if bias is None:
            return dx, dk
        return dx, dk, g4.sum(axis=(0, 2, 3))

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return make_node(out, parents, vjp)


# ---------------------------------------------------------------------------
# elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    _check_same_shape(a, b, "add")
    return make_node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    _check_same_shape(a, b, "sub")
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    _check_same_dtype(a, b)
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(x: Tensor, s: float) -> Tensor:
    s = x.dtype.type(s)
    return make_node(x.data * s, (x,), lambda g: (g * s,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return make_node(np.where(pos, x.data, x.dtype.type(0)), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    a = x.dtype.type(alpha)
    pos = x.data > 0
    slope = np.where(pos, x.dtype.type(1), a)
    return make_node(np.where(pos, x.data, x.data * a), (x,), lambda g: (g * slope,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ValueError("log: non-positive input value")
    xd = x.data
    return make_node(np.log(xd), (x,), lambda g: (g / xd,))


# ---------------------------------------------------------------------------
# pooling / reshaping

def avg_pool(x: Tensor) -> Tensor:
    """Mean over the last axis: [..., k] -> [...]."""
    if x.ndim < 1 or x.shape[-1] == 0:
        raise ShapeError(f"avg_pool: bad shape {x.shape}")
    k = x.shape[-1]

    def vjp(g):
        return (np.repeat(np.expand_dims(g, -1), k, axis=-1) / x.dtype.type(k),)

    return make_node(x.data.mean(axis=-1), (x,), vjp)


def adaptive_avg_pool(x: Tensor, target: tuple[int, int]) -> Tensor:
    """Average pooling of the last two axes onto a fixed grid.

    Window (i, j) covers rows [floor(i*h/th), ceil((i+1)*h/th)) and the
    analogous columns, so any input size maps onto any target size.
    """
    th, tw = target
    if th < 1 or tw < 1:
        raise ShapeError(f"adaptive_avg_pool: bad target {target}")
    if x.ndim < 2:
        raise ShapeError(f"adaptive_avg_pool: input must have spatial axes, got {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    xd = x.data
    rows = [(i * h // th, -(-(i + 1) * h // th)) for i in range(th)]
    cols = [(j * w // tw, -(-(j + 1) * w // tw)) for j in range(tw)]
    out = np.empty(x.shape[:-2] + (th, tw), dtype=x.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[..., i, j] = xd[..., r0:r1, c0:c1].mean(axis=(-2, -1))

    def vjp(g):
        dx = np.zeros_like(xd)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = x.dtype.type((r1 - r0) * (c1 - c0))
                dx[..., r0:r1, c0:c1] += g[..., i : i + 1, j : j + 1] / area
        return (dx,)

    return make_node(out, (x,), vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from err
    return make_node(out.copy(), (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (-1,))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    _check_same_dtype(*tensors)
    nd = tensors[0].ndim
    for t in tensors:
        if t.ndim != nd:
            raise ShapeError("concat: rank mismatch")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        pieces = []
        idx: list = [slice(None)] * nd
        for i in range(len(tensors)):
            idx[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(idx)].copy())
        return tuple(pieces)

    return make_node(out, tuple(tensors), vjp)


def take_row(x: Tensor, i: int) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"take_row needs a 2-D tensor, got {x.shape}")
    if not 0 <= i < x.shape[0]:
        raise ShapeError(f"take_row: row {i} out of range for {x.shape}")

    def vjp(g):
        dx = np.zeros_like(x.data)
        dx[i] = g
        return (dx,)

    return make_node(x.data[i].copy(), (x,), vjp)


def stack_rows(rows: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a [n, d] matrix."""
    if not rows:
        raise ShapeError("stack_rows: empty list")
    _check_same_dtype(*rows)
    d = rows[0].shape
    for r in rows:
        if r.ndim != 1 or r.shape != d:
            raise ShapeError("stack_rows: rows must be 1-D with equal length")

    def vjp(g):
        return tuple(g[i] for i in range(len(rows)))

    return make_node(np.stack([r.data for r in rows]), tuple(rows), vjp)


def sum_all(x: Tensor) -> Tensor:
    return make_node(
        np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),)
    )


def mean_all(x: Tensor) -> Tensor:
    n = x.dtype.type(x.size)
    return make_node(
        np.asarray(x.data.mean(), dtype=x.dtype),
        (x,),
        lambda g: (np.broadcast_to(g / n, x.shape).copy(),),
    )


# ---------------------------------------------------------------------------
# attention / classification heads

def softmax_masked(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to ``mask``.

    Masked-out entries are exactly 0 in the output; kept entries are
    positive and sum to 1 per row. Stabilized by subtracting the row max
    over kept entries before exponentiation, so nothing overflows; a kept
    entry more than ~88 below its row max underflows to 0 in float32.
    Every row needs at least one kept entry.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise ShapeError(f"softmax_masked: mask {mask.shape} != scores {scores.shape}")
    if not mask.any(axis=-1).all():
        raise ValueError("softmax_masked: empty mask row")
    neg = np.array(-np.inf, dtype=scores.dtype)
    shifted = np.where(mask, scores.data, neg)
    m = shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted - m)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (p * g).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)

    return make_node(p, (scores,), vjp)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class over the batch.

    ``logits`` is [batch, classes]; ``labels`` holds class indices. The
    gradient w.r.t. the logits is (softmax - onehot) / batch.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    b, k = logits.shape
    if b == 0:
        raise ShapeError("cross_entropy: empty batch")
    if labels.shape != (b,) or labels.dtype.kind not in "iu":
        raise ShapeError(f"cross_entropy: labels must be {b} class indices")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"cross_entropy: label out of range [0, {k})")
    ld = logits.data
    m = ld.max(axis=1, keepdims=True)
    z = ld - m
    lse = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    nll = lse - ld[np.arange(b), labels]
    out = np.asarray(nll.mean(), dtype=logits.dtype)

    def vjp(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(b), labels] -= 1
        return (p * (g / logits.dtype.type(b)),)

    return make_node(out, (logits,), vjp)
