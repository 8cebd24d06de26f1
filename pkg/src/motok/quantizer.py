"""Vector-quantised motion autoencoder and the motion tokenizer estimator.

A pose sequence of T frames is encoded by two stride-2 convolutions into
T/4 latent rows, each row is snapped to its nearest codebook entry, and a
de-convolutional decoder maps the quantised rows back to poses. The decoder
also predicts the four foot-contact channels, which the encoder never sees.
"""

import copy
import logging
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._validation import (
    TrainingDivergedError,
    check_motion_tokens,
    check_pose_sequence,
    make_generator,
    torch_dtype,
)
from .diff import ops
from .diff.estimators import straight_through
from .diff.layers import Conv1d, ResBlock
from .diff.optim import Adam

logger = logging.getLogger(__name__)

CONTACT_CHANNELS = 4
DOWNSAMPLE = 4


class MotionEncoder(nn.Module):
    def __init__(self, in_channels, hidden, code_dim, generator=None, dtype=torch.float64):
        super().__init__()
        self.down1 = Conv1d(in_channels, hidden, 4, 2, 1, generator, dtype)
        self.res1 = ResBlock(hidden, generator, dtype)
        self.down2 = Conv1d(hidden, hidden, 4, 2, 1, generator, dtype)
        self.res2 = ResBlock(hidden, generator, dtype)
        self.out = Conv1d(hidden, code_dim, 3, 1, 1, generator, dtype)

    def forward(self, x):
        """(B, T, C) -> (B, T/4, d)."""
        h = x.transpose(1, 2)
        h = self.res1(ops.leaky_relu(self.down1(h)))
        h = self.res2(ops.leaky_relu(self.down2(h)))
        return self.out(h).transpose(1, 2)


class MotionDecoder(nn.Module):
    def __init__(self, code_dim, hidden, out_channels, generator=None, dtype=torch.float64):
        super().__init__()
        self.inp = Conv1d(code_dim, hidden, 3, 1, 1, generator, dtype)
        self.res1 = ResBlock(hidden, generator, dtype)
        self.res2 = ResBlock(hidden, generator, dtype)
        self.up1 = Conv1d(hidden, hidden, 3, 1, 1, generator, dtype)
        self.up2 = Conv1d(hidden, out_channels, 3, 1, 1, generator, dtype)
        self.out = Conv1d(out_channels, out_channels, 3, 1, 1, generator, dtype)

    def forward(self, q):
        """(B, t, d) -> (B, 4t, C)."""
        h = self.res2(self.res1(self.inp(q.transpose(1, 2))))
        h = ops.leaky_relu(self.up1(ops.upsample_nearest(h)))
        h = ops.leaky_relu(self.up2(ops.upsample_nearest(h)))
        return self.out(h).transpose(1, 2)


class VQModel(nn.Module):
    def __init__(self, pose_channels, hidden, code_dim, codebook_size, generator=None, dtype=torch.float64):
        super().__init__()
        self.encoder = MotionEncoder(pose_channels - CONTACT_CHANNELS, hidden, code_dim, generator, dtype)
        self.decoder = MotionDecoder(code_dim, hidden, pose_channels, generator, dtype)
        self.codebook = nn.Parameter(torch.empty(codebook_size, code_dim, dtype=dtype))
        with torch.no_grad():
            self.codebook.uniform_(-1.0 / codebook_size, 1.0 / codebook_size, generator=generator)

    def encode(self, motion):
        if motion.shape[1] < DOWNSAMPLE:
            raise ValueError(f"encode needs at least {DOWNSAMPLE} frames, got {motion.shape[1]}")
        return self.encoder(motion[..., :-CONTACT_CHANNELS])


def nearest_codes(latent, codebook, chunk=4096):
    """Index of the nearest codebook row for every row of ``latent``.

    Squared distances are computed from explicit differences so exactly
    equidistant entries compare equal; ties go to the lowest index.
    """
    if codebook.shape[0] == 0:
        raise ValueError("empty codebook")
    if latent.shape[-1] != codebook.shape[1]:
        raise ops.OpShapeError("quantize", latent.shape, codebook.shape)
    flat = latent.reshape(-1, latent.shape[-1])
    out = []
    with torch.no_grad():
        for start in range(0, flat.shape[0], chunk):
            block = flat[start:start + chunk]
            dist = ((block[:, None, :] - codebook[None, :, :]) ** 2).sum(-1)
            out.append(torch.argmin(dist, dim=1))
    return torch.cat(out).reshape(latent.shape[:-1]) if out else torch.zeros(latent.shape[:-1], dtype=torch.long)


def quantize(latent, codebook, indices=None):
    """Snap latent rows to codebook entries.

    Returns ``(quantized, indices, codes)``: ``quantized`` carries the
    straight-through wiring (forward value = codes, gradient -> latent) and
    ``codes`` is the raw codebook lookup used by the codebook loss term.
    ``indices`` may be supplied to freeze the assignment.
    """
    if indices is None:
        indices = nearest_codes(latent, codebook)
    codes = ops.embedding(indices, codebook)
    return straight_through(latent, codes), indices, codes


@dataclass
class VqLossReport:
    reconstruction: torch.Tensor
    codebook_term: torch.Tensor
    commitment_term: torch.Tensor
    beta: float

    @property
    def total(self):
        return self.reconstruction + self.codebook_term + self.commitment_term

    def as_floats(self):
        return {
            "reconstruction": self.reconstruction.item(),
            "codebook": self.codebook_term.item(),
            "commitment": self.commitment_term.item(),
            "total": self.total.item(),
        }


def vq_loss(motion, reconstruction, latent, codes, beta=1.0):
    """Mean absolute reconstruction error plus the two stop-gradient code terms.

    The codebook term moves only the codebook; the commitment term, scaled by
    ``beta``, moves only the encoder.
    """
    rec = (reconstruction - motion).abs().mean()
    codebook_term = ((latent.detach() - codes) ** 2).mean()
    commitment = beta * ((latent - codes.detach()) ** 2).mean()
    return VqLossReport(rec, codebook_term, commitment, beta)


def _sample_windows(motions, rng, batch_size, window, stride=1):
    """A list of arrays to encode: one stacked batch of equal-length crops, or
    with ``window=None`` every drawn motion whole (trimmed to a multiple of 4)."""
    idx = rng.integers(0, len(motions), size=batch_size)
    chosen = [motions[i] for i in idx]
    if window is None:
        return [m[None, : len(m) - len(m) % DOWNSAMPLE] for m in chosen]
    length = min(window, min(len(m) for m in chosen))
    length -= length % DOWNSAMPLE
    out = []
    for m in chosen:
        start = int(rng.integers(0, (len(m) - length) // stride + 1)) * stride
        out.append(m[start:start + length])
    return [np.stack(out)]


def _pooled(parts):
    # (B, t, .) pieces of different lengths -> one (1, sum B*t, .) row
    return torch.cat([p.reshape(1, -1, p.shape[-1]) for p in parts], dim=1)


class MotionTokenizer(BaseEstimator, TransformerMixin):
    """Learn a motion codebook and map pose sequences to motion-token sequences.

    Token ids ``0..K-1`` index the codebook; ``K``, ``K+1`` and ``K+2`` are the
    BOM, EOM and PAD specials. ``transform`` takes normalised pose sequences
    and returns framed token arrays; ``inverse_transform`` decodes them.
    """

    def __init__(self, codebook_size=64, code_dim=32, hidden=128, beta=1.0, n_steps=2000,
                 batch_size=32, window=64, window_stride=1, lr=2e-4, lr_decay=False, clip_norm=None,
                 dead_code_steps=256, reseed_dead_codes=True,
                 n_joints=8, dtype="float64", random_state=0, eval_every=200):
        self.codebook_size = codebook_size
        self.code_dim = code_dim
        self.hidden = hidden
        self.beta = beta
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.window = window
        self.window_stride = window_stride
        self.lr = lr
        self.lr_decay = lr_decay
        self.clip_norm = clip_norm
        self.dead_code_steps = dead_code_steps
        self.reseed_dead_codes = reseed_dead_codes
        self.n_joints = n_joints
        self.dtype = dtype
        self.random_state = random_state
        self.eval_every = eval_every

    # special ids
    @property
    def bom(self):
        return self.codebook_size

    @property
    def eom(self):
        return self.codebook_size + 1

    @property
    def pad(self):
        return self.codebook_size + 2

    @property
    def pose_channels(self):
        from .data.layout import channel_count
        return channel_count(self.n_joints)

    def build_model(self, generator=None):
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be at least 2")
        return VQModel(self.pose_channels, self.hidden, self.code_dim, self.codebook_size,
                       generator, torch_dtype(self.dtype))

    def _tensor(self, x):
        return torch.as_tensor(np.asarray(x), dtype=torch_dtype(self.dtype))

    def fit(self, X, y=None, validation=None):
        """Train on normalised pose sequences ``X``.

        ``validation`` (optional list of sequences) is scored with the
        reconstruction MAE every ``eval_every`` steps and recorded in
        ``history_``.
        """
        motions = [check_pose_sequence(m, self.pose_channels) for m in X]
        if not motions:
            raise ValueError("cannot fit on an empty corpus")
        rng = np.random.default_rng(self.random_state)
        gen = make_generator(self.random_state)
        model = self.build_model(gen)
        self.model_ = model
        opt = Adam(model.named_parameters(), lr=self.lr, clip_norm=self.clip_norm)
        idle = np.zeros(self.codebook_size, dtype=np.int64)
        usage = np.zeros(self.codebook_size, dtype=np.int64)
        history = []
        with torch.no_grad():
            first = _sample_windows(motions, rng, self.batch_size, self.window, self.window_stride)
            self._init_codebook(_pooled([model.encode(self._tensor(b)) for b in first]), rng)
        if validation is not None:
            history.append({"step": 0, "val_mae": self.reconstruction_error(validation)})
        last_good = copy.deepcopy(model.state_dict())

        for step in range(1, self.n_steps + 1):
            if self.lr_decay:
                opt.lr = self.lr * (1.0 - (step - 1) / self.n_steps)
            parts = [self._tensor(b) for b in _sample_windows(motions, rng, self.batch_size, self.window,
                                                              self.window_stride)]
            latents = [model.encode(b) for b in parts]
            quantized, indices, codes = quantize(_pooled(latents), model.codebook)
            recon, offset = [], 0
            for lat in latents:
                n = lat.shape[0] * lat.shape[1]
                recon.append(model.decoder(quantized[:, offset:offset + n].reshape(lat.shape)))
                offset += n
            latent = _pooled(latents)
            report = vq_loss(_pooled(parts), _pooled(recon), latent, codes, self.beta)
            loss = report.total
            if not torch.isfinite(loss):
                model.load_state_dict(last_good)
                raise TrainingDivergedError(step, last_good)
            opt.zero_grad()
            loss.backward()
            opt.step()

            hits = np.bincount(indices.reshape(-1).numpy(), minlength=self.codebook_size)
            usage += hits
            idle = np.where(hits > 0, 0, idle + 1)
            if self.reseed_dead_codes:
                self._reseed(idle, latent, rng)
            record = {"step": step, **report.as_floats()}
            if validation is not None and step % self.eval_every == 0:
                record["val_mae"] = self.reconstruction_error(validation)
            history.append(record)
            if step % 100 == 0:
                last_good = copy.deepcopy(model.state_dict())
                logger.debug("vq step %d loss %.4f", step, record["total"])
        self.history_ = history
        self.usage_counts_ = usage
        return self

    def _init_codebook(self, latent, rng):
        rows = latent.detach().reshape(-1, latent.shape[-1])
        replace = rows.shape[0] < self.codebook_size
        pick = rng.choice(rows.shape[0], self.codebook_size, replace=replace)
        with torch.no_grad():
            self.model_.codebook.copy_(rows[torch.from_numpy(pick)])

    def _reseed(self, idle, latent, rng):
        dead = np.flatnonzero(idle >= self.dead_code_steps)
        if len(dead) == 0:
            return
        rows = latent.detach().reshape(-1, latent.shape[-1])
        pick = rng.integers(0, rows.shape[0], size=len(dead))
        with torch.no_grad():
            self.model_.codebook[torch.from_numpy(dead)] = rows[torch.from_numpy(pick)]
        idle[dead] = 0

    # ----------------------------------------------------------------- inference
    def encode(self, motion):
        check_is_fitted(self, "model_")
        motion = check_pose_sequence(motion, self.pose_channels)
        motion = motion[: len(motion) - len(motion) % DOWNSAMPLE]
        with torch.no_grad():
            return self.model_.encode(self._tensor(motion)[None])[0]

    def quantize(self, latent):
        check_is_fitted(self, "model_")
        with torch.no_grad():
            _, idx, codes = quantize(latent, self.model_.codebook)
        return codes, idx

    def decode(self, quantized):
        check_is_fitted(self, "model_")
        with torch.no_grad():
            return self.model_.decoder(torch.as_tensor(quantized)[None])[0].numpy()

    def tokenize(self, motion):
        """Pose sequence -> ``[BOM, s_1, ..., s_t, EOM]`` with t = floor(T/4)."""
        latent = self.encode(motion)
        _, idx = self.quantize(latent)
        return np.concatenate([[self.bom], idx.numpy(), [self.eom]]).astype(np.int64)

    def detokenize(self, tokens):
        """Framed token sequence -> pose sequence of 4 frames per interior token."""
        check_is_fitted(self, "model_")
        interior = check_motion_tokens(tokens, self.codebook_size)
        codes = self.model_.codebook.detach()[torch.from_numpy(interior)]
        return self.decode(codes)

    def transform(self, X):
        return [self.tokenize(m) for m in X]

    def inverse_transform(self, X):
        return [self.detokenize(t) for t in X]

    def token_context(self, token_id):
        """The 4-frame segment a single codebook entry decodes to."""
        check_is_fitted(self, "model_")
        token_id = int(token_id)
        if not 0 <= token_id < self.codebook_size:
            raise ValueError(f"token id {token_id} is a special or out of range [0, {self.codebook_size})")
        return self.detokenize(np.array([self.bom, token_id, self.eom]))

    def reconstruction_error(self, X):
        """Mean absolute error of encode-quantize-decode over sequences ``X``."""
        check_is_fitted(self, "model_")
        total, count = 0.0, 0
        for m in X:
            m = check_pose_sequence(m, self.pose_channels)
            m = m[: len(m) - len(m) % DOWNSAMPLE]
            recon = self.detokenize(self.tokenize(m))
            total += float(np.abs(recon - m).sum())
            count += m.size
        return total / count
