"""Save and restore fitted estimators through the binary checkpoint format.

Each checkpoint stores the estimator's ``get_params()``, a small ``extra``
dict of fitted scalars, free-form ``meta`` (config hash, upstream hashes) and
the model tensors.
"""

import numpy as np

from .data.normalize import PoseNormalizer
from .diff import checkpoint
from .diff.checkpoint import CheckpointError
from .evaluation.extractors import FeatureExtractors
from .motion2text import MotionCaptioner
from .quantizer import MotionTokenizer
from .text2motion import TextToMotion, TextToMotionTransformer

KINDS = {
    "normalizer": PoseNormalizer,
    "vq": MotionTokenizer,
    "m2t": MotionCaptioner,
    "t2m": TextToMotion,
    "t2m-transformer": TextToMotionTransformer,
    "extractors": FeatureExtractors,
}


def _kind_of(est):
    for kind, cls in KINDS.items():
        if type(est) is cls:
            return kind
    raise TypeError(f"no checkpoint kind for {type(est).__name__}")


def _modules(est):
    """(prefix, module) pairs holding the estimator's tensors."""
    if isinstance(est, FeatureExtractors):
        return [("text.", est.text_net_), ("motion.", est.motion_net_)]
    return [("", est.model_)]


def estimator_tensors(est):
    if isinstance(est, PoseNormalizer):
        return {"mean": est.mean_.copy(), "std": est.std_.copy(), "scale": est.scale_.copy()}
    tensors = {}
    for prefix, module in _modules(est):
        tensors.update(checkpoint.state_tensors(module, prefix))
    return tensors


def _extra(est):
    if isinstance(est, (MotionCaptioner, TextToMotion, TextToMotionTransformer, FeatureExtractors)):
        return {"vocab_size": int(est.vocab_size_)}
    return {}


def save_estimator(path, est, meta=None):
    """Write ``est`` to ``path`` and return the sha256 of the file."""
    kind = _kind_of(est)
    hyper = {"params": est.get_params(), "extra": _extra(est), "meta": meta or {}}
    return checkpoint.save(path, kind, hyper, estimator_tensors(est))


def load_estimator(path, kind=None):
    """Return ``(estimator, meta)``; ``kind`` optionally pins the expected kind."""
    found, hyper, tensors = checkpoint.load(path)
    if kind is not None and found != kind:
        raise CheckpointError(f"{path}: expected a {kind!r} checkpoint, found {found!r}")
    if found not in KINDS:
        raise CheckpointError(f"{path}: unknown checkpoint kind {found!r}")
    est = KINDS[found](**hyper["params"])
    extra = hyper.get("extra", {})
    if isinstance(est, PoseNormalizer):
        est.mean_, est.std_, est.scale_ = (np.asarray(tensors[k], dtype=np.float64) for k in ("mean", "std", "scale"))
        est.n_features_in_ = len(est.mean_)
    elif isinstance(est, MotionTokenizer):
        est.model_ = est.build_model()
    else:
        est._init_model(extra["vocab_size"])
    if not isinstance(est, PoseNormalizer):
        for prefix, module in _modules(est):
            checkpoint.load_state(module, tensors, prefix)
            module.eval()
    return est, hyper.get("meta", {})
