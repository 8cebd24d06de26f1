"""Motion-token to text translation (captioning)."""

import copy
import logging

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    TrainingDivergedError,
    check_motion_tokens,
    check_text_tokens,
    make_generator,
    pad_batch,
    torch_dtype,
)
from .data.vocab import BOS, EOS, PAD
from .decoding import beam_search, greedy_decode
from .diff.optim import Adam
from .transformer import Seq2SeqTransformer

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-6


def _pad_mask(lengths, width):
    return torch.arange(width)[None, :] >= torch.as_tensor(lengths)[:, None]


class MotionCaptioner(BaseEstimator):
    """Transformer that maps framed motion-token sequences to word-id sequences.

    ``fit(X, y)`` takes motion-token arrays ``X`` (BOM ... EOM) and text-id
    arrays ``y`` (BOS ... EOS). ``predict`` decodes with beam search.
    """

    def __init__(self, codebook_size=64, vocab_size=None, d_model=128, n_heads=4, n_enc=2, n_dec=2,
                 dropout=0.1, n_steps=3000, batch_size=32, lr=2e-4, clip_norm=1.0, beam_size=2,
                 max_len=30, dtype="float64", random_state=0):
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
        self.beam_size = beam_size
        self.max_len = max_len
        self.dtype = dtype
        self.random_state = random_state

    @property
    def motion_pad(self):
        return self.codebook_size + 2

    def build_model(self, vocab_size, generator=None):
        return Seq2SeqTransformer(self.codebook_size + 3, vocab_size, self.d_model, self.n_heads,
                                  self.n_enc, self.n_dec, dropout=self.dropout, generator=generator,
                                  dtype=torch_dtype(self.dtype))

    def _init_model(self, vocab_size):
        gen = make_generator(self.random_state)
        self.vocab_size_ = vocab_size
        self.model_ = self.build_model(vocab_size, gen)
        self.model_.dropout_generator = make_generator(self.random_state + 1)
        return self.model_

    def _src(self, motion_tokens):
        src, lengths = pad_batch(motion_tokens, self.motion_pad)
        return src, _pad_mask(lengths, src.shape[1])

    def _logits(self, motion_tokens, texts):
        src, src_pad = self._src(motion_tokens)
        tgt, _ = pad_batch(texts, PAD)
        return self.model_(src, src_pad, tgt[:, :-1]), tgt[:, 1:]

    def loss(self, motion_tokens, texts):
        """Mean negative log-likelihood per non-PAD target token."""
        for t in texts:
            if len(t) <= 2:
                raise ValueError("target text has an empty interior")
        logits, target = self._logits(motion_tokens, texts)
        return nll(logits, target)

    def fit(self, X, y):
        for x in X:
            check_motion_tokens(x, self.codebook_size)
        X = [np.asarray(x) for x in X]
        y = [np.asarray(t) for t in y]
        if len(X) != len(y) or not X:
            raise ValueError("X and y must be non-empty and aligned")
        vocab = self.vocab_size or int(max(t.max() for t in y)) + 1
        for t in y:
            check_text_tokens(t, vocab)
        model = self._init_model(vocab)
        opt = Adam(model.named_parameters(), lr=self.lr, clip_norm=self.clip_norm)
        rng = np.random.default_rng(self.random_state)
        history = []
        last_good = copy.deepcopy(model.state_dict())
        model.train()
        for step in range(1, self.n_steps + 1):
            idx = rng.integers(0, len(X), size=min(self.batch_size, len(X)))
            loss = self.loss([X[i] for i in idx], [y[i] for i in idx])
            if not torch.isfinite(loss):
                model.load_state_dict(last_good)
                raise TrainingDivergedError(step, last_good)
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.append({"step": step, "nll": loss.item()})
            if step % 100 == 0:
                last_good = copy.deepcopy(model.state_dict())
                logger.debug("m2t step %d nll %.4f", step, loss.item())
        model.eval()
        self.history_ = history
        return self

    # ----------------------------------------------------------------- inference
    def _step_fn(self, motion_tokens):
        src, src_pad = self._src([motion_tokens])
        with torch.no_grad():
            memory = self.model_.encode(src, src_pad)

        def step(prefixes):
            with torch.no_grad():
                n = prefixes.shape[0]
                logits = self.model_.decode(prefixes, memory.expand(n, -1, -1), src_pad.expand(n, -1))[:, -1]
                logits[:, PAD] = float("-inf")
                logits[:, BOS] = float("-inf")
                return torch.log_softmax(logits, dim=-1)
        return step

    def caption_greedy(self, motion_tokens, max_len=None):
        check_is_fitted(self, "model_")
        check_motion_tokens(motion_tokens, self.codebook_size)
        self.model_.eval()
        return greedy_decode(self._step_fn(motion_tokens), BOS, EOS, max_len or self.max_len)

    def caption_beam(self, motion_tokens, beam_size=None, max_len=None):
        check_is_fitted(self, "model_")
        check_motion_tokens(motion_tokens, self.codebook_size)
        self.model_.eval()
        beam = self.beam_size if beam_size is None else beam_size
        return beam_search(self._step_fn(motion_tokens), BOS, EOS, beam, max_len or self.max_len)

    def predict(self, X, beam_size=None):
        """Captions (BOS ... EOS id arrays) for each motion-token sequence."""
        return [self.caption_beam(x, beam_size)[0] for x in X]

    def score_text_given_motion(self, motion, text):
        """Total log-probability of ``text`` given motion tokens.

        ``motion`` is either a framed id array or a (L, K+3) tensor whose rows
        are probability vectors over token ids; gradients flow into the latter.
        """
        check_is_fitted(self, "model_")
        text = torch.as_tensor(np.asarray(text))[None]
        if isinstance(motion, torch.Tensor) and motion.is_floating_point():
            check_simplex(motion)
            src = motion[None]
        else:
            check_motion_tokens(motion, self.codebook_size)
            src = torch.as_tensor(np.asarray(motion))[None]
        src_pad = torch.zeros(1, src.shape[1], dtype=torch.bool)
        logits = self.model_(src, src_pad, text[:, :-1])
        lp = torch.log_softmax(logits, dim=-1).gather(-1, text[:, 1:, None])
        return lp.sum()

    def source_nll(self, src, src_pad, texts):
        """Mean per-token NLL of ``texts`` given a batched source.

        ``src`` holds ids (B, S) or simplex rows (B, S, K+3); ``src_pad`` marks
        padded source positions.
        """
        if src.is_floating_point():
            check_simplex(src[~src_pad])
        tgt, _ = pad_batch(texts, PAD)
        logits = self.model_(src, src_pad, tgt[:, :-1])
        return nll(logits, tgt[:, 1:])

    def freeze(self):
        check_is_fitted(self, "model_")
        self.model_.eval()
        for p in self.model_.parameters():
            p.requires_grad_(False)
            p.grad = None
        return self


def check_simplex(rows, tol=SIMPLEX_TOL):
    if (rows < 0).any():
        raise ValueError("simplex rows contain negative weights")
    err = (rows.sum(-1) - 1).abs().max()
    if err > tol:
        raise ValueError(f"simplex rows must sum to 1 within {tol}; max deviation {float(err):.3g}")


def nll(logits, target, pad=PAD):
    lp = torch.log_softmax(logits, dim=-1).gather(-1, target[..., None])[..., 0]
    mask = target != pad
    return -(lp * mask).sum() / mask.sum()
