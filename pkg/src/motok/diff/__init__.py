"""Differentiable building blocks on top of torch autograd."""

from . import ops
from .estimators import gumbel_softmax, sample_gumbel, straight_through
from .ops import OpShapeError
from .optim import Adam, NonFiniteGradientError, adam_step, clip_by_global_norm

__all__ = [
    "Adam",
    "NonFiniteGradientError",
    "OpShapeError",
    "adam_step",
    "clip_by_global_norm",
    "gumbel_softmax",
    "ops",
    "sample_gumbel",
    "straight_through",
]
