import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import Entry
from .layout import PoseFeatureLayout

logger = logging.getLogger(__name__)


def _motions(X):
    out = []
    for item in X:
        if isinstance(item, Entry):
            if item.split != "train":
                raise ValueError(f"normalisation statistics must come from the train split; got {item.id!r} ({item.split})")
            out.append(np.asarray(item.motion, dtype=np.float64))
        else:
            out.append(np.asarray(item, dtype=np.float64))
    return out


class PoseNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel z-scoring followed by an amplification of root and contact channels.

    ``fit`` accepts pose arrays or corpus entries; entries from any split other
    than ``train`` are refused.
    """

    def __init__(self, n_joints=8, root_scale=5.0):
        self.n_joints = n_joints
        self.root_scale = root_scale

    def fit(self, X, y=None):
        motions = _motions(X)
        if not motions:
            raise ValueError("cannot fit normaliser on an empty set")
        stacked = np.concatenate(motions, axis=0)
        layout = PoseFeatureLayout(self.n_joints)
        if stacked.shape[1] != layout.n_channels:
            raise ValueError(f"expected {layout.n_channels} channels, got {stacked.shape[1]}")
        self.mean_ = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        flat = std <= 1e-12
        if flat.any():
            logger.warning("%d channels have zero variance; using std=1", int(flat.sum()))
        std[flat] = 1.0
        self.std_ = std
        self.scale_ = np.where(layout.root_scale_mask(), self.root_scale, 1.0)
        self.n_features_in_ = stacked.shape[1]
        return self

    def _check(self, x):
        check_is_fitted(self, "mean_")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features_in_:
            raise ValueError(f"channel-count mismatch: expected {self.n_features_in_}, got shape {x.shape}")
        return x

    def transform(self, X):
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return (self._check(X) - self.mean_) / self.std_ * self.scale_
        return [self.transform(x) for x in X]

    def inverse_transform(self, X):
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return self._check(X) / self.scale_ * self.std_ + self.mean_
        return [self.inverse_transform(x) for x in X]
