"""Input validation helpers shared by the estimators."""

import numpy as np
import torch


class TrainingDivergedError(FloatingPointError):
    """Raised when a loss turns non-finite; ``state`` holds the last good parameters."""

    def __init__(self, step, state=None):
        self.step = step
        self.state = state
        super().__init__(f"non-finite loss at step {step}")


def torch_dtype(name):
    table = {"float64": torch.float64, "float32": torch.float32}
    if name not in table:
        raise ValueError(f"dtype must be one of {sorted(table)}, got {name!r}")
    return table[name]


def make_generator(seed):
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def check_rng(seed):
    """Return a ``numpy.random.Generator`` from a seed, generator or None."""
    return np.random.default_rng(seed)


def check_pose_sequence(motion, n_channels=None, min_frames=4):
    motion = np.asarray(motion, dtype=np.float64)
    if motion.ndim != 2:
        raise ValueError(f"pose sequence must be 2-D (T, D), got shape {motion.shape}")
    if motion.shape[0] < min_frames:
        raise ValueError(f"pose sequence needs at least {min_frames} frames, got {motion.shape[0]}")
    if n_channels is not None and motion.shape[1] != n_channels:
        raise ValueError(f"expected {n_channels} pose channels, got {motion.shape[1]}")
    if not np.isfinite(motion).all():
        raise ValueError("pose sequence contains non-finite values")
    return motion


def check_motion_tokens(tokens, codebook_size, allow_empty=False):
    """Validate BOM ... EOM framing and index range; return interior ids."""
    tokens = np.asarray(tokens)
    bom, eom = codebook_size, codebook_size + 1
    if tokens.ndim != 1 or len(tokens) < 2 or tokens[0] != bom or tokens[-1] != eom:
        raise ValueError("motion token sequence must start with BOM and end with EOM")
    interior = tokens[1:-1]
    if not allow_empty and len(interior) == 0:
        raise ValueError("motion token sequence has no interior tokens")
    if len(interior) and (interior.min() < 0 or interior.max() >= codebook_size):
        raise ValueError(f"motion token out of range [0, {codebook_size})")
    return interior.astype(np.int64)


def check_text_tokens(ids, vocab_size, bos=1, eos=2, unk=3):
    ids = np.asarray(ids)
    if ids.ndim != 1 or len(ids) < 2 or ids[0] != bos or ids[-1] != eos:
        raise ValueError("text token sequence must start with BOS and end with EOS")
    interior = ids[1:-1]
    if len(interior) and (interior.min() < unk or interior.max() >= vocab_size):
        raise ValueError("text token sequence has interior specials or out-of-range ids")
    return ids.astype(np.int64)


def pad_batch(seqs, pad_value):
    """Right-pad 1-D integer sequences into a (B, L) LongTensor plus lengths."""
    lengths = [len(s) for s in seqs]
    out = np.full((len(seqs), max(lengths)), pad_value, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return torch.from_numpy(out), torch.tensor(lengths)
