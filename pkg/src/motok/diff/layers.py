"""Parameterised layers built on the checked ops.

Initialisation: He-style uniform fan-in scaling for linear and conv weights,
orthogonal blocks for GRU recurrent weights, zero biases.
"""

import math

import torch
from torch import nn

from . import ops


def he_uniform_(tensor, fan_in, generator=None, gain=math.sqrt(2.0)):
    bound = gain * math.sqrt(3.0 / fan_in)
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=generator)
    return tensor


class Linear(nn.Module):
    def __init__(self, in_features, out_features, bias=True, generator=None, dtype=torch.float64):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_features, in_features, dtype=dtype))
        he_uniform_(self.weight, in_features, generator)
        self.bias = nn.Parameter(torch.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv1d(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 generator=None, dtype=torch.float64):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, dtype=dtype))
        he_uniform_(self.weight, in_channels * kernel_size, generator)
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=dtype))

    def forward(self, x):
        return ops.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class Embedding(nn.Module):
    def __init__(self, num_embeddings, dim, generator=None, dtype=torch.float64):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(num_embeddings, dim, dtype=dtype))
        he_uniform_(self.weight, dim, generator, gain=1.0)

    def forward(self, ids):
        return ops.embedding(ids, self.weight)

    def soft(self, weights):
        return ops.soft_embedding(weights, self.weight)


class LayerNorm(nn.Module):
    def __init__(self, dim, dtype=torch.float64):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(dim, dtype=dtype))

    def forward(self, x):
        return ops.layer_norm(x, self.weight, self.bias)


class GRUCell(nn.Module):
    def __init__(self, input_size, hidden_size, generator=None, dtype=torch.float64):
        super().__init__()
        self.hidden_size = hidden_size
        self.w_ih = nn.Parameter(torch.empty(3 * hidden_size, input_size, dtype=dtype))
        self.w_hh = nn.Parameter(torch.empty(3 * hidden_size, hidden_size, dtype=dtype))
        self.b_ih = nn.Parameter(torch.zeros(3 * hidden_size, dtype=dtype))
        self.b_hh = nn.Parameter(torch.zeros(3 * hidden_size, dtype=dtype))
        he_uniform_(self.w_ih, input_size, generator, gain=1.0)
        with torch.no_grad():
            for block in self.w_hh.split(hidden_size, dim=0):
                nn.init.orthogonal_(block, generator=generator)

    def forward(self, x, h):
        return ops.gru_cell(x, h, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


class BiGRU(nn.Module):
    """Single-layer bidirectional GRU over padded batches.

    ``forward(x, lengths)`` takes x of shape (B, N, D) and returns per-step
    outputs (B, N, 2H), zero past each sequence end, and the final forward and
    backward states concatenated (B, 2H).
    """

    def __init__(self, input_size, hidden_size, generator=None, dtype=torch.float64):
        super().__init__()
        self.hidden_size = hidden_size
        self.fwd = GRUCell(input_size, hidden_size, generator, dtype)
        self.bwd = GRUCell(input_size, hidden_size, generator, dtype)

    def forward(self, x, lengths):
        batch, steps, _ = x.shape
        lengths = torch.as_tensor(lengths)
        h = x.new_zeros(batch, self.hidden_size)
        fwd_out = []
        for t in range(steps):
            valid = (t < lengths).unsqueeze(1).to(x.dtype)
            h_new = self.fwd(x[:, t], h)
            h = valid * h_new + (1 - valid) * h
            fwd_out.append(h * valid)
        h_fwd = h
        h = x.new_zeros(batch, self.hidden_size)
        bwd_out = [None] * steps
        for t in reversed(range(steps)):
            valid = (t < lengths).unsqueeze(1).to(x.dtype)
            h_new = self.bwd(x[:, t], h)
            h = valid * h_new + (1 - valid) * h
            bwd_out[t] = h * valid
        outputs = torch.cat([torch.stack(fwd_out, 1), torch.stack(bwd_out, 1)], dim=-1)
        return outputs, torch.cat([h_fwd, h], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, channels, generator=None, dtype=torch.float64):
        super().__init__()
        self.conv1 = Conv1d(channels, channels, 3, 1, 1, generator, dtype)
        self.conv2 = Conv1d(channels, channels, 3, 1, 1, generator, dtype)

    def forward(self, x):
        return ops.add(x, self.conv2(ops.leaky_relu(self.conv1(x))))
