"""Retrieval, distribution and translation metrics over frozen features."""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from sacrebleu.metrics import BLEU

FID_JITTER = 1e-6
POOL_SIZE = 32


def contrastive_loss(text_feat, motion_feat, mismatched, margin=10.0):
    """Margin contrastive loss on squared Euclidean distance, averaged over rows.

    Matched rows (``mismatched`` = 0) cost ``d2 ** 2``; mismatched rows cost
    ``max(0, margin - d2) ** 2``.
    """
    if not margin > 0:
        raise ValueError("margin must be positive")
    if text_feat.shape != motion_feat.shape:
        raise ValueError(f"feature shapes differ: {tuple(text_feat.shape)} vs {tuple(motion_feat.shape)}")
    y = torch.as_tensor(mismatched, dtype=text_feat.dtype)
    d2 = ((text_feat - motion_feat) ** 2).sum(-1)
    loss = (1 - y) * d2 ** 2 + y * torch.clamp(margin - d2, min=0) ** 2
    return loss.mean()


def _as_features(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (n, d) array")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def ranks_in_pools(dist):
    """Rank of the true candidate (column 0) in each row of a pool distance matrix.

    Rank counts distractors strictly closer than the true one, so ties favour
    the true candidate.
    """
    dist = np.asarray(dist)
    return (dist[:, 1:] < dist[:, :1]).sum(axis=1)


def r_precision(queries, candidates, top_k=(1, 2, 3), rng=None, pool_size=POOL_SIZE):
    """Top-k retrieval accuracy of ``candidates[i]`` for ``queries[i]``.

    Each query is ranked against its own candidate plus ``pool_size - 1``
    distinct mismatched candidates drawn from the rest of the set.
    """
    q = _as_features(queries, "queries")
    c = _as_features(candidates, "candidates")
    if q.shape != c.shape:
        raise ValueError("queries and candidates must be aligned")
    n = len(q)
    if n < pool_size:
        raise ValueError(f"R-precision needs at least {pool_size} pairs for its pool, got {n}")
    rng = np.random.default_rng(rng)
    pools = np.empty((n, pool_size), dtype=np.int64)
    for i in range(n):
        others = rng.choice(n - 1, pool_size - 1, replace=False)
        others[others >= i] += 1
        pools[i, 0] = i
        pools[i, 1:] = others
    dist = np.linalg.norm(q[:, None, :] - c[pools], axis=-1)
    ranks = ranks_in_pools(dist)
    return np.array([(ranks < k).mean() for k in top_k])


def multimodal_distance(text_features, motion_features):
    a = _as_features(text_features, "text_features")
    b = _as_features(motion_features, "motion_features")
    if a.shape != b.shape:
        raise ValueError("features must be aligned")
    return float(np.linalg.norm(a - b, axis=1).mean())


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @classmethod
    def from_features(cls, features):
        x = _as_features(features, "features")
        if len(x) < 2:
            raise ValueError("need at least 2 samples for a covariance")
        return cls(x.mean(0), np.atleast_2d(np.cov(x, rowvar=False)), len(x))


def _sym_sqrt(m):
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def fid(a, b, eps=FID_JITTER):
    """Frechet distance between two Gaussian fits.

    The cross term uses the symmetric product ``S1^(1/2) S2 S1^(1/2)``, whose
    square root has the same trace as ``(S1 S2)^(1/2)``. Both covariances get
    ``eps * I`` only when a fit is under-sampled or singular.
    """
    for s in (a, b):
        if not (np.isfinite(s.mean).all() and np.isfinite(s.cov).all()):
            raise ValueError("non-finite Gaussian statistics")
    if a.mean.shape != b.mean.shape:
        raise ValueError("statistics have different dimensions")
    d = len(a.mean)
    c1, c2 = a.cov, b.cov
    if min(a.n, b.n) < d + 1 or min(np.linalg.eigvalsh(c1).min(), np.linalg.eigvalsh(c2).min()) <= eps:
        warnings.warn(f"covariance is singular or estimated from fewer than {d + 1} samples; adding {eps} jitter",
                      RuntimeWarning, stacklevel=2)
        c1 = c1 + eps * np.eye(d)
        c2 = c2 + eps * np.eye(d)
    s1 = _sym_sqrt(c1)
    cross = s1 @ c2 @ s1
    w = np.linalg.eigvalsh((cross + cross.T) / 2)
    tr_sqrt = np.sqrt(np.clip(w, 0, None)).sum()
    diff = a.mean - b.mean
    return float(max(0.0, diff @ diff + np.trace(c1) + np.trace(c2) - 2 * tr_sqrt))


def _paired_subsets(n, size, rng):
    """Two index subsets, each without replacement; disjoint when n >= 2*size."""
    if n >= 2 * size:
        idx = rng.choice(n, 2 * size, replace=False)
        return idx[:size], idx[size:]
    return rng.choice(n, size, replace=False), rng.choice(n, size, replace=False)


def diversity(features, sample_size=50, rng=None):
    """Mean distance between the i-th elements of two random subsets."""
    x = _as_features(features, "features")
    if len(x) < 2:
        raise ValueError("diversity needs at least 2 features")
    if sample_size > len(x):
        raise ValueError(f"sample_size {sample_size} exceeds feature count {len(x)}")
    if len(x) < 2 * sample_size:
        warnings.warn("fewer than 2 * sample_size features; the two subsets may overlap", RuntimeWarning,
                      stacklevel=2)
    rng = np.random.default_rng(rng)
    i, j = _paired_subsets(len(x), sample_size, rng)
    return float(np.linalg.norm(x[i] - x[j], axis=1).mean())


def multimodality(per_text_features, sample_size=10, rng=None):
    """Mean within-description distance, ``per_text_features`` one (G, d) array per text."""
    groups = [_as_features(g, "per_text_features") for g in per_text_features]
    if not groups:
        raise ValueError("no descriptions given")
    short = [c for c, g in enumerate(groups) if len(g) < 2 * sample_size]
    if short:
        raise ValueError(f"descriptions {short} have fewer than {2 * sample_size} generations")
    rng = np.random.default_rng(rng)
    total = 0.0
    for g in groups:
        i, j = _paired_subsets(len(g), sample_size, rng)
        total += np.linalg.norm(g[i] - g[j], axis=1).sum()
    return float(total / (len(groups) * sample_size))


def _join(tokens):
    return " ".join(str(t) for t in tokens)


def bleu(candidates, references, n=4):
    """Corpus BLEU (percent) with clipped n-gram precisions and a brevity penalty.

    ``candidates`` is a list of token lists; ``references[i]`` is a list of
    token lists for candidate ``i``. No smoothing.
    """
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references) or any(len(r) == 0 for r in references):
        raise ValueError("every candidate needs at least one reference")
    width = max(len(r) for r in references)
    streams = [[_join(r[k]) if k < len(r) else None for r in references] for k in range(width)]
    scorer = BLEU(tokenize="none", max_ngram_order=n, smooth_method="none", effective_order=False)
    score = scorer.corpus_score([_join(c) for c in candidates], streams).score
    return float(min(100.0, max(0.0, score)))
