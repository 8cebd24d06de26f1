"""Text to motion-token generation.

The main model is a bidirectional-GRU text encoder with an attentive GRU
decoder over motion-token ids. It can be trained with an extra inverse
alignment term: a relaxed token sequence is sampled with Gumbel-Softmax,
fed to a frozen captioner, and penalised by the captioner's NLL of the
original text. A Transformer variant trained by teacher forcing only is also
provided.
"""

import copy
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._validation import (
    TrainingDivergedError,
    check_motion_tokens,
    check_text_tokens,
    make_generator,
    pad_batch,
    torch_dtype,
)
from .data.vocab import PAD
from .decoding import sample_until_end
from .diff import ops
from .diff.estimators import gumbel_softmax, sample_gumbel
from .diff.layers import BiGRU, Embedding, GRUCell, LayerNorm, Linear
from .diff.optim import Adam
from .motion2text import _pad_mask, nll
from .transformer import Seq2SeqTransformer

logger = logging.getLogger(__name__)


@dataclass
class SentenceEncoding:
    sentence_vector: torch.Tensor  # (B, d_l)
    word_vectors: torch.Tensor  # (B, N, d_l)
    pad_mask: torch.Tensor  # (B, N) True at padding
    keys: torch.Tensor = None  # attention projections, computed once per sentence
    values: torch.Tensor = None


def attention_oracle(h, words, w_q, b_q, w_k, w_v, b_v):
    """Direct dense recomputation of softmax(QK^T / sqrt(d)) V for one state."""
    q = h @ w_q.T + b_q
    k = words @ w_k.T
    v = words @ w_v.T + b_v
    s = (k @ q) / math.sqrt(q.shape[-1])
    w = np.exp(s - s.max())
    w /= w.sum()
    return w @ v, w


class AttnGRUModel(nn.Module):
    def __init__(self, vocab_size, n_motion_ids, word_dim=64, enc_hidden=64, dec_hidden=256,
                 att_dim=128, max_len=256, generator=None, dtype=torch.float64):
        super().__init__()
        d_l = 2 * enc_hidden
        self.word_emb = Embedding(vocab_size, word_dim, generator, dtype)
        self.input_emb = Linear(word_dim, enc_hidden, True, generator, dtype)
        self.encoder = BiGRU(enc_hidden, enc_hidden, generator, dtype)
        self.z2init = Linear(d_l, dec_hidden, True, generator, dtype)
        self.token_emb = Embedding(n_motion_ids, dec_hidden, generator, dtype)
        self.w_q = Linear(dec_hidden, att_dim, True, generator, dtype)
        self.w_k = Linear(d_l, att_dim, False, generator, dtype)
        self.w_v = Linear(d_l, att_dim, True, generator, dtype)
        self.att_linear = Linear(dec_hidden + att_dim, dec_hidden, True, generator, dtype)
        self.att_norm = LayerNorm(dec_hidden, dtype)
        self.gru = GRUCell(dec_hidden, dec_hidden, generator, dtype)
        self.proj = Linear(dec_hidden, n_motion_ids, False, generator, dtype)
        self.register_buffer("positions", ops.sinusoidal_positions(max_len, dec_hidden, dtype), persistent=False)

    def encode_text(self, ids, lengths):
        x = self.input_emb(self.word_emb(ids))
        words, final = self.encoder(x, lengths)
        return SentenceEncoding(final, words, _pad_mask(lengths, ids.shape[1]),
                                self.w_k(words)[:, None], self.w_v(words)[:, None])

    def init_state(self, enc):
        return torch.tanh(self.z2init(enc.sentence_vector))

    def attend(self, h, enc):
        """Attention vector over word features for decoder state ``h`` (B, d_h)."""
        q = self.w_q(h)[:, None, None, :]
        k = self.w_k(enc.word_vectors)[:, None] if enc.keys is None else enc.keys
        v = self.w_v(enc.word_vectors)[:, None] if enc.values is None else enc.values
        out, weights = ops.scaled_dot_attention(q, k, v, enc.pad_mask[:, None, None, :])
        return out[:, 0, 0], weights[:, 0, 0]

    def step(self, prev, h, t, enc):
        """One decoder step: logits over motion ids and the new state."""
        emb = self.token_emb(prev) + self.positions[t]
        att, _ = self.attend(h, enc)
        x = ops.leaky_relu(self.att_norm(self.att_linear(ops.concat([emb, att], dim=-1))))
        h = self.gru(x, h)
        return self.proj(h), h


def temperature_at(step, n_steps, tau_start, tau_end):
    """Linear anneal over the first half of training, then constant."""
    half = max(1, n_steps // 2)
    frac = min(1.0, step / half)
    return tau_start + (tau_end - tau_start) * frac


class TextToMotion(BaseEstimator):
    """Attentive GRU generator of motion-token sequences from text ids.

    ``fit(X, y, captioner=None)``: ``X`` are framed text-id arrays, ``y`` the
    matching framed motion-token arrays. With ``ia_weight > 0`` a trained
    :class:`~motok.motion2text.MotionCaptioner` must be given; it is frozen
    for the whole run.
    """

    def __init__(self, codebook_size=64, vocab_size=None, word_dim=64, enc_hidden=64, dec_hidden=256,
                 att_dim=128, teacher_forcing=0.4, ia_weight=1.0, tau_start=1.0, tau_end=0.1,
                 n_steps=2000, batch_size=32, lr=2e-4, clip_norm=1.0, max_tokens=50,
                 dtype="float64", random_state=0):
        self.codebook_size = codebook_size
        self.vocab_size = vocab_size
        self.word_dim = word_dim
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.att_dim = att_dim
        self.teacher_forcing = teacher_forcing
        self.ia_weight = ia_weight
        self.tau_start = tau_start
        self.tau_end = tau_end
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.lr = lr
        self.clip_norm = clip_norm
        self.max_tokens = max_tokens
        self.dtype = dtype
        self.random_state = random_state

    @property
    def bom(self):
        return self.codebook_size

    @property
    def eom(self):
        return self.codebook_size + 1

    @property
    def pad(self):
        return self.codebook_size + 2

    def build_model(self, vocab_size, generator=None):
        return AttnGRUModel(vocab_size, self.codebook_size + 3, self.word_dim, self.enc_hidden,
                            self.dec_hidden, self.att_dim, generator=generator, dtype=torch_dtype(self.dtype))

    def _init_model(self, vocab_size):
        self.vocab_size_ = vocab_size
        self.model_ = self.build_model(vocab_size, make_generator(self.random_state))
        return self.model_

    def _encode(self, texts):
        for t in texts:
            if len(t) <= 2:
                raise ValueError("text has an empty interior")
        ids, lengths = pad_batch(texts, PAD)
        return self.model_.encode_text(ids, lengths)

    # ------------------------------------------------------------------ losses
    def nll_loss(self, texts, tokens, forcing_draws=None):
        """Teacher-forced NLL per motion token.

        ``forcing_draws`` is a (B, L) array of uniforms; a step feeds the
        ground-truth token when its draw is below ``teacher_forcing`` and the
        model's own argmax otherwise. ``None`` means full teacher forcing.
        """
        enc = self._encode(texts)
        gt, _ = pad_batch(tokens, self.pad)
        h = self.model_.init_state(enc)
        prev = gt[:, 0]
        logits = []
        for t in range(gt.shape[1] - 1):
            out, h = self.model_.step(prev, h, t, enc)
            logits.append(out)
            if t + 1 < gt.shape[1] - 1:
                if forcing_draws is None:
                    prev = gt[:, t + 1]
                else:
                    use_gt = torch.from_numpy(forcing_draws[:, t + 1] < self.teacher_forcing)
                    prev = torch.where(use_gt, gt[:, t + 1], out.detach().argmax(-1))
                    prev = torch.where(prev >= self.bom, gt[:, t + 1], prev)
        return nll(torch.stack(logits, 1), gt[:, 1:], pad=self.pad)

    def relaxed_rollout(self, texts, lengths, tau, noise=None, generator=None):
        """Sample relaxed token rows step by step.

        Returns a (B, n_max + 2, K+3) source tensor framed with one-hot BOM/EOM
        rows, and its padding mask. The hard argmax of each relaxed row is fed
        back to the decoder. ``noise`` (B, n_max, K+3) fixes the Gumbel draws.
        """
        enc = self._encode(texts)
        n_ids = self.codebook_size + 3
        lengths = torch.as_tensor(lengths)
        n_max = int(lengths.max())
        h = self.model_.init_state(enc)
        prev = torch.full((len(texts),), self.bom, dtype=torch.long)
        rows = []
        for t in range(n_max):
            logits, h = self.model_.step(prev, h, t, enc)
            g = None if noise is None else noise[:, t]
            y = gumbel_softmax(logits, tau, generator=generator, noise=g)
            rows.append(y)
            prev = y.detach()[:, :self.codebook_size].argmax(-1)
        dtype = rows[0].dtype
        eye = torch.eye(n_ids, dtype=dtype)
        zero = torch.zeros(len(texts), 1, n_ids, dtype=dtype)
        body = torch.cat([zero, torch.stack(rows, 1), zero], dim=1)
        pos = torch.arange(n_max + 2)[None, :]
        in_body = ((pos >= 1) & (pos <= lengths[:, None]))[..., None].to(dtype)
        is_bom = (pos == 0)[..., None].to(dtype)
        is_eom = (pos == lengths[:, None] + 1)[..., None].to(dtype)
        pad = pos > lengths[:, None] + 1
        src = in_body * body + is_bom * eye[self.bom] + is_eom * eye[self.eom] + pad[..., None].to(dtype) * eye[self.pad]
        return src, pad

    def inverse_alignment_loss(self, captioner, texts, lengths, tau, noise=None, generator=None):
        """Frozen-captioner NLL of ``texts`` given relaxed samples (per text token)."""
        if not tau > 0:
            raise ValueError(f"temperature must be positive, got {tau}")
        src, pad = self.relaxed_rollout(texts, lengths, tau, noise, generator)
        return captioner.source_nll(src, pad, texts)

    def train_step_loss(self, texts, tokens, captioner, tau, forcing_draws=None, noise=None, generator=None):
        nll_term = self.nll_loss(texts, tokens, forcing_draws)
        if self.ia_weight > 0:
            lengths = [len(t) - 2 for t in tokens]
            ia = self.inverse_alignment_loss(captioner, texts, lengths, tau, noise, generator)
        else:
            ia = torch.zeros((), dtype=nll_term.dtype)
        return nll_term, ia

    # ----------------------------------------------------------------- training
    def fit(self, X, y, captioner=None):
        if self.ia_weight > 0 and captioner is None:
            raise ValueError("inverse alignment needs a trained motion2text captioner (or set ia_weight=0)")
        y = [np.asarray(t) for t in y]
        for t in y:
            check_motion_tokens(t, self.codebook_size)
        X = [np.asarray(x) for x in X]
        if len(X) != len(y) or not X:
            raise ValueError("X and y must be non-empty and aligned")
        vocab = self.vocab_size or int(max(x.max() for x in X)) + 1
        for x in X:
            check_text_tokens(x, vocab)
        if captioner is not None:
            captioner.freeze()
        model = self._init_model(vocab)
        opt = Adam(model.named_parameters(), lr=self.lr, clip_norm=self.clip_norm)
        rng = np.random.default_rng(self.random_state)
        gumbel_gen = make_generator(self.random_state + 7)
        history = []
        last_good = copy.deepcopy(model.state_dict())
        for step in range(1, self.n_steps + 1):
            idx = rng.integers(0, len(X), size=min(self.batch_size, len(X)))
            texts = [X[i] for i in idx]
            tokens = [y[i] for i in idx]
            draws = rng.random((len(idx), max(len(t) for t in tokens)))
            tau = temperature_at(step, self.n_steps, self.tau_start, self.tau_end)
            nll_term, ia = self.train_step_loss(texts, tokens, captioner, tau, draws, generator=gumbel_gen)
            loss = nll_term + self.ia_weight * ia
            if not torch.isfinite(loss):
                model.load_state_dict(last_good)
                raise TrainingDivergedError(step, last_good)
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.append({"step": step, "nll": nll_term.item(), "ia": ia.item(), "total": loss.item(), "tau": tau})
            if step % 100 == 0:
                last_good = copy.deepcopy(model.state_dict())
                logger.debug("t2m step %d nll %.4f ia %.4f", step, nll_term.item(), ia.item())
        self.history_ = history
        return self

    # ---------------------------------------------------------------- inference
    def step_distribution(self, text, prev_tokens):
        """Next-token distribution after feeding ``prev_tokens`` (starting with BOM)."""
        check_is_fitted(self, "model_")
        prev_tokens = np.asarray(prev_tokens)
        if prev_tokens.min() < 0 or prev_tokens.max() >= self.codebook_size + 3:
            raise ValueError("invalid motion token id")
        with torch.no_grad():
            enc = self._encode([np.asarray(text)])
            h = self.model_.init_state(enc)
            for t, tok in enumerate(prev_tokens):
                logits, h = self.model_.step(torch.tensor([int(tok)]), h, t, enc)
            return torch.softmax(logits[0], -1).numpy()

    def sample(self, texts, seeds, max_tokens=None):
        """Sample one token sequence per (text, seed); pure per pair.

        At each step generation stops if EOM is the most probable id (after at
        least one token); otherwise a codebook id is drawn from the predicted
        distribution restricted to codebook ids. Returns framed sequences and
        a flag per sequence telling whether EOM ended it before the cap.
        """
        check_is_fitted(self, "model_")
        cap = max_tokens or self.max_tokens
        rngs = [np.random.default_rng(s) for s in seeds]
        k = self.codebook_size
        with torch.no_grad():
            enc = self._encode([np.asarray(t) for t in texts])
            h = self.model_.init_state(enc)
            prev = torch.full((len(texts),), self.bom, dtype=torch.long)
            out = [[] for _ in texts]
            done = [False] * len(texts)
            ended = [False] * len(texts)
            for t in range(cap):
                logits, h = self.model_.step(prev, h, t, enc)
                probs = torch.softmax(logits.double(), -1).numpy()
                nxt = prev.clone()
                for i in range(len(texts)):
                    if done[i]:
                        continue
                    if t > 0 and int(np.argmax(probs[i])) == self.eom:
                        done[i] = ended[i] = True
                        continue
                    p = probs[i, :k] / probs[i, :k].sum()
                    tok = int(np.searchsorted(np.cumsum(p), rngs[i].random() * p.sum(), side="right"))
                    tok = min(tok, k - 1)
                    out[i].append(tok)
                    nxt[i] = tok
                if all(done):
                    break
                prev = nxt
        seqs = [np.array([self.bom] + o + [self.eom], dtype=np.int64) for o in out]
        return seqs, ended

    def generate(self, text, seed=0, max_tokens=None):
        seqs, _ = self.sample([text], [seed], max_tokens)
        return seqs[0]

    def rollout_argmax(self, text, max_tokens=None):
        """Deterministic rollout taking the most probable of codebook ids and EOM."""
        check_is_fitted(self, "model_")
        cap = max_tokens or self.max_tokens
        allowed = list(range(self.codebook_size)) + [self.eom]
        with torch.no_grad():
            enc = self._encode([np.asarray(text)])
            h = self.model_.init_state(enc)
            prev = torch.tensor([self.bom])
            out = []
            for t in range(cap):
                logits, h = self.model_.step(prev, h, t, enc)
                tok = allowed[int(torch.argmax(logits[0, allowed]))]
                if tok == self.eom and out:
                    break
                if tok == self.eom:
                    tok = int(torch.argmax(logits[0, :self.codebook_size]))
                out.append(tok)
                prev = torch.tensor([tok])
        return np.array([self.bom] + out + [self.eom], dtype=np.int64)

    def predict(self, X, seed=0):
        seqs, _ = self.sample(X, [seed + i for i in range(len(X))])
        return seqs


class TextToMotionTransformer(BaseEstimator):
    """Transformer text-to-motion-token model trained by teacher forcing only."""

    def __init__(self, codebook_size=64, vocab_size=None, d_model=128, n_heads=4, n_enc=2, n_dec=2,
                 dropout=0.1, n_steps=2000, batch_size=32, lr=2e-4, clip_norm=1.0, max_tokens=50,
                 dtype="float64", random_state=0):
        self.codebook_size = codebook_size
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_enc = n_enc
        self.n_dec = n_dec
        self.dropout = dropout
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.lr = lr
        self.clip_norm = clip_norm
        self.max_tokens = max_tokens
        self.dtype = dtype
        self.random_state = random_state

    @property
    def bom(self):
        return self.codebook_size

    @property
    def eom(self):
        return self.codebook_size + 1

    def _init_model(self, vocab_size):
        self.vocab_size_ = vocab_size
        self.model_ = Seq2SeqTransformer(vocab_size, self.codebook_size + 3, self.d_model, self.n_heads,
                                         self.n_enc, self.n_dec, dropout=self.dropout,
                                         generator=make_generator(self.random_state),
                                         dtype=torch_dtype(self.dtype))
        self.model_.dropout_generator = make_generator(self.random_state + 1)
        return self.model_

    def loss(self, texts, tokens):
        src, lengths = pad_batch(texts, PAD)
        tgt, _ = pad_batch(tokens, self.codebook_size + 2)
        logits = self.model_(src, _pad_mask(lengths, src.shape[1]), tgt[:, :-1])
        return nll(logits, tgt[:, 1:], pad=self.codebook_size + 2)

    def fit(self, X, y):
        y = [np.asarray(t) for t in y]
        for t in y:
            check_motion_tokens(t, self.codebook_size)
        X = [np.asarray(x) for x in X]
        vocab = self.vocab_size or int(max(x.max() for x in X)) + 1
        model = self._init_model(vocab)
        opt = Adam(model.named_parameters(), lr=self.lr, clip_norm=self.clip_norm)
        rng = np.random.default_rng(self.random_state)
        history = []
        model.train()
        for step in range(1, self.n_steps + 1):
            idx = rng.integers(0, len(X), size=min(self.batch_size, len(X)))
            loss = self.loss([X[i] for i in idx], [y[i] for i in idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.append({"step": step, "nll": loss.item()})
        model.eval()
        self.history_ = history
        return self

    def _step_fn(self, text):
        src = torch.as_tensor(np.asarray(text))[None]
        src_pad = torch.zeros(1, src.shape[1], dtype=torch.bool)
        with torch.no_grad():
            memory = self.model_.encode(src, src_pad)

        def step(prefixes):
            with torch.no_grad():
                n = prefixes.shape[0]
                logits = self.model_.decode(prefixes, memory.expand(n, -1, -1), src_pad.expand(n, -1))[:, -1]
                return torch.log_softmax(logits.double(), -1)
        return step

    def generate(self, text, seed=0, max_tokens=None):
        check_is_fitted(self, "model_")
        self.model_.eval()
        seq, _ = sample_until_end(self._step_fn(text), self.bom, self.eom, self.codebook_size,
                                  max_tokens or self.max_tokens, np.random.default_rng(seed))
        return seq

    def sample(self, texts, seeds, max_tokens=None):
        check_is_fitted(self, "model_")
        self.model_.eval()
        out, ended = [], []
        for text, seed in zip(texts, seeds):
            seq, end = sample_until_end(self._step_fn(text), self.bom, self.eom, self.codebook_size,
                                        max_tokens or self.max_tokens, np.random.default_rng(seed))
            out.append(seq)
            ended.append(end)
        return out, ended

    def rollout_argmax(self, text, max_tokens=None):
        check_is_fitted(self, "model_")
        self.model_.eval()
        step = self._step_fn(text)
        prefix = [self.bom]
        allowed = list(range(self.codebook_size)) + [self.eom]
        for _ in range(max_tokens or self.max_tokens):
            lp = step(torch.tensor([prefix]))[0]
            tok = allowed[int(torch.argmax(lp[allowed]))]
            if tok == self.eom and len(prefix) > 1:
                break
            if tok == self.eom:
                tok = int(torch.argmax(lp[:self.codebook_size]))
            prefix.append(tok)
        return np.array(prefix + [self.eom], dtype=np.int64)

    def predict(self, X, seed=0):
        return self.sample(X, [seed + i for i in range(len(X))])[0]


def shared_gumbel_noise(batch, n_max, n_ids, generator, dtype=torch.float64):
    """Pre-drawn Gumbel noise for common-random-number comparisons."""
    return sample_gumbel((batch, n_max, n_ids), generator, dtype)
