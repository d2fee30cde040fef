"""Minimal reverse-mode autodiff engine: tensors, ops, params, Adam."""

from .tensor import Tensor, ShapeError, TapeError, backward, no_grad, is_grad_enabled
from .params import ParamSet, glorot_uniform, zeros
from .optim import Adam, adam_update
from . import ops

__all__ = [
    "Tensor",
    "ShapeError",
    "TapeError",
    "backward",
    "no_grad",
    "is_grad_enabled",
    "ParamSet",
    "glorot_uniform",
    "zeros",
    "Adam",
    "adam_update",
    "ops",
]
