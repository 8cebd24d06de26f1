"""Encoder-decoder Transformer shared by both translation directions."""

import math

import torch
from torch import nn

from .diff import ops
from .diff.layers import Embedding, LayerNorm, Linear


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model, n_heads, generator=None, dtype=torch.float64):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.q = Linear(d_model, d_model, True, generator, dtype)
        self.k = Linear(d_model, d_model, True, generator, dtype)
        self.v = Linear(d_model, d_model, True, generator, dtype)
        self.o = Linear(d_model, d_model, True, generator, dtype)

    def _split(self, x):
        b, n, d = x.shape
        return x.view(b, n, self.n_heads, d // self.n_heads).transpose(1, 2)

    def forward(self, query, key, value, mask=None):
        """``mask`` broadcasts to (B, heads, Lq, Lk); True blocks attention."""
        q, k, v = self._split(self.q(query)), self._split(self.k(key)), self._split(self.v(value))
        out, _ = ops.scaled_dot_attention(q, k, v, mask)
        b, h, n, dh = out.shape
        return self.o(out.transpose(1, 2).reshape(b, n, h * dh))


class FeedForward(nn.Module):
    def __init__(self, d_model, d_ff, generator=None, dtype=torch.float64):
        super().__init__()
        self.inner = Linear(d_model, d_ff, True, generator, dtype)
        self.outer = Linear(d_ff, d_model, True, generator, dtype)

    def forward(self, x):
        return self.outer(torch.relu(self.inner(x)))


class EncoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, d_ff, generator=None, dtype=torch.float64):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, generator, dtype)
        self.ff = FeedForward(d_model, d_ff, generator, dtype)
        self.norm1 = LayerNorm(d_model, dtype)
        self.norm2 = LayerNorm(d_model, dtype)

    def forward(self, x, pad_mask, drop):
        h = self.norm1(x)
        x = x + drop(self.attn(h, h, h, pad_mask))
        return x + drop(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, d_ff, generator=None, dtype=torch.float64):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads, generator, dtype)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, generator, dtype)
        self.ff = FeedForward(d_model, d_ff, generator, dtype)
        self.norm1 = LayerNorm(d_model, dtype)
        self.norm2 = LayerNorm(d_model, dtype)
        self.norm3 = LayerNorm(d_model, dtype)

    def forward(self, x, memory, self_mask, memory_mask, drop):
        h = self.norm1(x)
        x = x + drop(self.self_attn(h, h, h, self_mask))
        x = x + drop(self.cross_attn(self.norm2(x), memory, memory, memory_mask))
        return x + drop(self.ff(self.norm3(x)))


class Seq2SeqTransformer(nn.Module):
    """Pre-norm Transformer with sinusoidal positions and a causal decoder.

    The source side accepts either integer ids or rows of simplex weights over
    the source vocabulary (a relaxed one-hot), embedded as weighted mixtures.
    """

    def __init__(self, src_vocab, tgt_vocab, d_model=128, n_heads=4, n_enc=2, n_dec=2,
                 ff_mult=4, dropout=0.1, max_len=512, generator=None, dtype=torch.float64):
        super().__init__()
        self.d_model = d_model
        self.dropout = dropout
        self.src_emb = Embedding(src_vocab, d_model, generator, dtype)
        self.tgt_emb = Embedding(tgt_vocab, d_model, generator, dtype)
        self.encoder = nn.ModuleList(EncoderLayer(d_model, n_heads, ff_mult * d_model, generator, dtype) for _ in range(n_enc))
        self.decoder = nn.ModuleList(DecoderLayer(d_model, n_heads, ff_mult * d_model, generator, dtype) for _ in range(n_dec))
        self.enc_norm = LayerNorm(d_model, dtype)
        self.dec_norm = LayerNorm(d_model, dtype)
        self.out = Linear(d_model, tgt_vocab, True, generator, dtype)
        self.register_buffer("positions", ops.sinusoidal_positions(max_len, d_model, dtype), persistent=False)
        self.dropout_generator = None

    def _drop(self, x):
        return ops.dropout(x, self.dropout, self.training, self.dropout_generator)

    def _embed(self, emb, x):
        n = x.shape[1]
        return self._drop(emb * math.sqrt(self.d_model) + self.positions[:n])

    def encode(self, src, src_pad):
        """``src``: (B, S) ids or (B, S, V_src) simplex rows; ``src_pad``: (B, S) bool."""
        emb = self.src_emb.soft(src) if src.is_floating_point() else self.src_emb(src)
        x = self._embed(emb, src)
        mask = src_pad[:, None, None, :]
        for layer in self.encoder:
            x = layer(x, mask, self._drop)
        return self.enc_norm(x)

    def decode(self, tgt_in, memory, src_pad):
        """Logits (B, L, V_tgt) for every prefix position of ``tgt_in``."""
        n = tgt_in.shape[1]
        x = self._embed(self.tgt_emb(tgt_in), tgt_in)
        causal = torch.triu(torch.ones(n, n, dtype=torch.bool), diagonal=1)
        mem_mask = src_pad[:, None, None, :]
        for layer in self.decoder:
            x = layer(x, memory, causal, mem_mask, self._drop)
        return self.out(self.dec_norm(x))

    def forward(self, src, src_pad, tgt_in):
        return self.decode(tgt_in, self.encode(src, src_pad), src_pad)
