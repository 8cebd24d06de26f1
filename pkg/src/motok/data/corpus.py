"""Corpus container and its line-delimited JSON file format.

One record per line::

    {"id": str, "frames": [[...], ...], "fps": float, "texts": [str, ...], "split": "train"|"test"|"val"}

``frames`` is the T x D_p pose feature matrix, row-major.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layout import PoseFeatureLayout

SPLITS = ("train", "test", "val")


class CorpusFormatError(ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class Entry:
    id: str
    motion: np.ndarray
    fps: float
    texts: list
    split: str = "train"


@dataclass
class Corpus:
    entries: list
    layout: PoseFeatureLayout = field(default_factory=lambda: PoseFeatureLayout(8, ((2, 4), (3, 5), (6, 7))))

    def __len__(self):
        return len(self.entries)

    def split(self, name):
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [e for e in self.entries if e.split == name]

    def split_sizes(self):
        return {s: sum(e.split == s for e in self.entries) for s in SPLITS}


def split_counts(n, ratios=(0.8, 0.15, 0.05)):
    n_train = int(round(ratios[0] * n))
    n_test = int(round(ratios[1] * n))
    return n_train, n_test, n - n_train - n_test


def assign_splits(corpus, ratios=(0.8, 0.15, 0.05), rng=None):
    rng = np.random.default_rng(rng)
    n_train, n_test, _ = split_counts(len(corpus), ratios)
    order = rng.permutation(len(corpus))
    for rank, idx in enumerate(order):
        e = corpus.entries[idx]
        e.split = "train" if rank < n_train else ("test" if rank < n_train + n_test else "val")
    return corpus


def save_corpus(corpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in corpus.entries:
            record = {
                "id": e.id,
                "frames": np.asarray(e.motion, dtype=np.float64).tolist(),
                "fps": float(e.fps),
                "texts": list(e.texts),
                "split": e.split,
            }
            fh.write(json.dumps(record) + "\n")


def load_corpus(path, layout=None):
    """Read a corpus file, validating every record against ``layout``."""
    layout = layout or Corpus([]).layout
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise CorpusFormatError(lineno, "record is not an object")
        missing = {"id", "frames", "fps", "texts", "split"} - rec.keys()
        if missing:
            raise CorpusFormatError(lineno, f"missing fields {sorted(missing)}")
        try:
            frames = np.array(rec["frames"], dtype=np.float64)
        except (TypeError, ValueError):
            raise CorpusFormatError(lineno, "frames is not a numeric matrix") from None
        if frames.ndim != 2:
            raise CorpusFormatError(lineno, f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[1] != layout.n_channels:
            raise CorpusFormatError(
                lineno, f"pose dimension mismatch: expected {layout.n_channels}, got {frames.shape[1]}"
            )
        if not np.isfinite(frames).all():
            raise CorpusFormatError(lineno, "non-finite frame values")
        if rec["split"] not in SPLITS:
            raise CorpusFormatError(lineno, f"unknown split tag {rec['split']!r}")
        texts = rec["texts"]
        if not isinstance(texts, list) or not texts or not all(isinstance(t, str) for t in texts):
            raise CorpusFormatError(lineno, "texts must be a non-empty list of strings")
        entries.append(Entry(str(rec["id"]), frames, float(rec["fps"]), texts, rec["split"]))
    return Corpus(entries, layout)
