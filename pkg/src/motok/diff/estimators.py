"""Gradient estimators for discrete choices."""

import torch

from .ops import OpShapeError


class _StraightThrough(torch.autograd.Function):
    @staticmethod
    def forward(ctx, continuous, quantized):
        return quantized.clone()

    @staticmethod
    def backward(ctx, grad_output):
        # upstream gradient goes to the continuous branch untouched
        return grad_output, None


def straight_through(continuous, quantized):
    """Return ``quantized`` in the forward pass, route gradients to ``continuous``.

    The quantized branch receives no gradient through this op.
    """
    if continuous.shape != quantized.shape:
        raise OpShapeError("straight_through", continuous.shape, quantized.shape)
    return _StraightThrough.apply(continuous, quantized)


def sample_gumbel(shape, generator=None, dtype=torch.float64):
    tiny = torch.finfo(dtype).tiny
    u = torch.rand(shape, generator=generator, dtype=dtype).clamp(min=tiny, max=1.0 - 1e-12)
    return -torch.log(-torch.log(u))


def gumbel_softmax(logits, temperature, generator=None, noise=None):
    """Relaxed categorical sample ``softmax((logits + g) / temperature)``.

    ``noise`` lets callers pass pre-drawn Gumbel noise so that repeated
    evaluations share random numbers (finite-difference checks rely on it).
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if noise is None:
        noise = sample_gumbel(logits.shape, generator, logits.dtype)
    elif noise.shape != logits.shape:
        raise OpShapeError("gumbel_softmax", logits.shape, noise.shape)
    return torch.softmax((logits + noise) / temperature, dim=-1)
