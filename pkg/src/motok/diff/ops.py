"""Shape-checked differentiable operations.

Every op takes and returns ``torch.Tensor`` and relies on torch autograd for
its backward rule. The checks here exist so that a bad shape fails with the
op name and both offending shapes instead of a broadcasting surprise deep in
a model.
"""

import math

import torch
import torch.nn.functional as F

LEAKY_SLOPE = 0.2


class OpShapeError(ValueError):
    """Raised when an op receives incompatible input shapes."""

    def __init__(self, op, shape_a, shape_b, detail=""):
        self.op = op
        self.shapes = (tuple(shape_a), tuple(shape_b))
        msg = f"{op}: incompatible shapes {tuple(shape_a)} and {tuple(shape_b)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def conv1d_output_length(length, kernel_size, stride=1, padding=0):
    return (length + 2 * padding - kernel_size) // stride + 1


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Batched 1-D convolution. ``x`` is (B, C_in, L), ``weight`` (C_out, C_in, k)."""
    if x.dim() != 3 or weight.dim() != 3 or x.shape[1] != weight.shape[1]:
        raise OpShapeError("conv1d", x.shape, weight.shape, "expected (B, C_in, L) and (C_out, C_in, k)")
    if conv1d_output_length(x.shape[2], weight.shape[2], stride, padding) < 1:
        raise OpShapeError("conv1d", x.shape, weight.shape, "signal shorter than kernel")
    return F.conv1d(x, weight, bias, stride=stride, padding=padding)


def upsample_nearest(x, scale=2):
    if x.dim() != 3:
        raise OpShapeError("upsample_nearest", x.shape, (scale,), "expected (B, C, L)")
    return x.repeat_interleave(scale, dim=2)


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` with ``weight`` shaped (out, in)."""
    if x.shape[-1] != weight.shape[-1]:
        raise OpShapeError("linear", x.shape, weight.shape)
    return F.linear(x, weight, bias)


def embedding(ids, table):
    if ids.dtype not in (torch.int64, torch.int32):
        raise TypeError(f"embedding: ids must be integer, got {ids.dtype}")
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise OpShapeError("embedding", ids.shape, table.shape, "id out of range")
    return F.embedding(ids, table)


def soft_embedding(weights, table):
    """Embed simplex-weighted mixtures of table rows: ``weights @ table``."""
    if weights.shape[-1] != table.shape[0]:
        raise OpShapeError("soft_embedding", weights.shape, table.shape)
    return weights @ table


def leaky_relu(x, slope=LEAKY_SLOPE):
    return F.leaky_relu(x, negative_slope=slope)


def softmax(x, dim=-1):
    return torch.softmax(x, dim=dim)


def log_softmax(x, dim=-1):
    return torch.log_softmax(x, dim=dim)


def layer_norm(x, weight, bias, eps=1e-5):
    if weight.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise OpShapeError("layer_norm", x.shape, weight.shape)
    return F.layer_norm(x, x.shape[-1:], weight, bias, eps)


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step with gates ordered (reset, update, new)."""
    hidden = h.shape[-1]
    if w_ih.shape != (3 * hidden, x.shape[-1]):
        raise OpShapeError("gru_cell", x.shape, w_ih.shape)
    if w_hh.shape != (3 * hidden, hidden) or h.shape[:-1] != x.shape[:-1]:
        raise OpShapeError("gru_cell", h.shape, w_hh.shape)
    gi = F.linear(x, w_ih, b_ih)
    gh = F.linear(h, w_hh, b_hh)
    i_r, i_z, i_n = gi.chunk(3, dim=-1)
    h_r, h_z, h_n = gh.chunk(3, dim=-1)
    r = torch.sigmoid(i_r + h_r)
    z = torch.sigmoid(i_z + h_z)
    n = torch.tanh(i_n + r * h_n)
    return (1 - z) * n + z * h


def add(a, b):
    """Residual addition; shapes must match exactly (no broadcasting)."""
    if a.shape != b.shape:
        raise OpShapeError("add", a.shape, b.shape)
    return a + b


def concat(tensors, dim=-1):
    ref = tensors[0]
    for t in tensors[1:]:
        if t.dim() != ref.dim():
            raise OpShapeError("concat", ref.shape, t.shape)
        axis = dim % ref.dim()
        if any(t.shape[i] != ref.shape[i] for i in range(ref.dim()) if i != axis):
            raise OpShapeError("concat", ref.shape, t.shape)
    return torch.cat(tensors, dim=dim)


def scaled_dot_attention(q, k, v, mask=None):
    """softmax(q k^T / sqrt(d)) v. ``mask`` is True where attention is blocked.

    Returns the attended values and the attention weights.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise OpShapeError("attention", q.shape, k.shape)
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = scores.masked_fill(mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights @ v, weights


def dropout(x, p, training, generator=None):
    """Inverted dropout with an explicit generator, so runs are reproducible."""
    if not training or p == 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


def sinusoidal_positions(length, dim, dtype=torch.float64):
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: dim // 2])
    return pe
