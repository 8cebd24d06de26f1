"""Contrastively trained text and motion feature extractors used by the metrics."""

import logging

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted
from torch import nn

from .._validation import TrainingDivergedError, check_pose_sequence, make_generator, pad_batch, torch_dtype
from ..data.layout import channel_count
from ..data.vocab import PAD
from ..diff import ops
from ..diff.layers import BiGRU, Embedding, Linear
from ..diff.optim import Adam
from .metrics import contrastive_loss

logger = logging.getLogger(__name__)

POOL_FRAMES = 4


class TextFeatureNet(nn.Module):
    def __init__(self, vocab_size, word_dim, hidden, feature_dim, generator=None, dtype=torch.float64):
        super().__init__()
        self.emb = Embedding(vocab_size, word_dim, generator, dtype)
        self.gru = BiGRU(word_dim, hidden, generator, dtype)
        self.head = Linear(2 * hidden, feature_dim, True, generator, dtype)

    def forward(self, ids, lengths):
        _, final = self.gru(self.emb(ids), lengths)
        return self.head(final)


class MotionFeatureNet(nn.Module):
    """Per-frame projection, mean pooling over 4-frame blocks, then a BiGRU."""

    def __init__(self, pose_channels, hidden, feature_dim, generator=None, dtype=torch.float64):
        super().__init__()
        self.frame = Linear(pose_channels, hidden, True, generator, dtype)
        self.gru = BiGRU(hidden, hidden, generator, dtype)
        self.head = Linear(2 * hidden, feature_dim, True, generator, dtype)

    def forward(self, motion, lengths):
        b, t, _ = motion.shape
        x = ops.leaky_relu(self.frame(motion))
        x = x.reshape(b, t // POOL_FRAMES, POOL_FRAMES, -1).mean(2)
        _, final = self.gru(x, torch.as_tensor(lengths) // POOL_FRAMES)
        return self.head(final)


def _pad_motions(motions, dtype):
    """Trim each motion to a multiple of 4 frames and zero-pad to a common length."""
    trimmed = [m[: len(m) - len(m) % POOL_FRAMES] for m in motions]
    lengths = [len(m) for m in trimmed]
    out = np.zeros((len(trimmed), max(lengths), trimmed[0].shape[1]))
    for i, m in enumerate(trimmed):
        out[i, : len(m)] = m
    return torch.as_tensor(out, dtype=dtype), lengths


class FeatureExtractors(BaseEstimator):
    """Pair of encoders mapping texts and normalised motions into one feature space.

    ``fit(X, y)`` takes motions ``X`` and framed text-id arrays ``y`` (train
    split only). Mismatched pairs come from rolling the batch by one.
    """

    def __init__(self, vocab_size=None, n_joints=8, word_dim=64, hidden=128, feature_dim=64, margin=10.0,
                 n_steps=1500, batch_size=32, lr=1e-3, clip_norm=1.0, dtype="float64", random_state=0):
        self.vocab_size = vocab_size
        self.n_joints = n_joints
        self.word_dim = word_dim
        self.hidden = hidden
        self.feature_dim = feature_dim
        self.margin = margin
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.lr = lr
        self.clip_norm = clip_norm
        self.dtype = dtype
        self.random_state = random_state

    def _init_model(self, vocab_size):
        gen = make_generator(self.random_state)
        dtype = torch_dtype(self.dtype)
        self.vocab_size_ = vocab_size
        self.text_net_ = TextFeatureNet(vocab_size, self.word_dim, self.hidden, self.feature_dim, gen, dtype)
        self.motion_net_ = MotionFeatureNet(channel_count(self.n_joints), self.hidden, self.feature_dim, gen, dtype)

    def named_parameters(self):
        yield from (("text." + n, p) for n, p in self.text_net_.named_parameters())
        yield from (("motion." + n, p) for n, p in self.motion_net_.named_parameters())

    def _text(self, texts):
        ids, lengths = pad_batch(texts, PAD)
        return self.text_net_(ids, lengths)

    def _motion(self, motions):
        x, lengths = _pad_motions(motions, torch_dtype(self.dtype))
        return self.motion_net_(x, lengths)

    def loss(self, motions, texts):
        t = self._text(texts)
        m = self._motion(motions)
        n = len(texts)
        matched = contrastive_loss(t, m, torch.zeros(n), self.margin)
        if n < 2:
            return matched
        mismatched = contrastive_loss(t, torch.roll(m, 1, dims=0), torch.ones(n), self.margin)
        return matched + mismatched

    def fit(self, X, y):
        pose_channels = channel_count(self.n_joints)
        motions = [check_pose_sequence(m, pose_channels, min_frames=POOL_FRAMES) for m in X]
        texts = [np.asarray(t) for t in y]
        if len(motions) != len(texts) or not motions:
            raise ValueError("X and y must be non-empty and aligned")
        self._init_model(self.vocab_size or int(max(t.max() for t in texts)) + 1)
        opt = Adam(self.named_parameters(), lr=self.lr, clip_norm=self.clip_norm)
        rng = np.random.default_rng(self.random_state)
        history = []
        for step in range(1, self.n_steps + 1):
            idx = rng.choice(len(motions), size=min(self.batch_size, len(motions)), replace=False)
            loss = self.loss([motions[i] for i in idx], [texts[i] for i in idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.append({"step": step, "loss": loss.item()})
            if step % 100 == 0:
                logger.debug("extractor step %d loss %.4f", step, loss.item())
        self.history_ = history
        return self

    def text_features(self, texts, batch_size=256):
        check_is_fitted(self, "text_net_")
        out = []
        with torch.no_grad():
            for i in range(0, len(texts), batch_size):
                out.append(self._text([np.asarray(t) for t in texts[i:i + batch_size]]).double().numpy())
        return np.concatenate(out) if out else np.zeros((0, self.feature_dim))

    def motion_features(self, motions, batch_size=256):
        check_is_fitted(self, "motion_net_")
        pose_channels = channel_count(self.n_joints)
        motions = [check_pose_sequence(m, pose_channels, min_frames=POOL_FRAMES) for m in motions]
        out = []
        with torch.no_grad():
            for i in range(0, len(motions), batch_size):
                out.append(self._motion(motions[i:i + batch_size]).double().numpy())
        return np.concatenate(out) if out else np.zeros((0, self.feature_dim))
