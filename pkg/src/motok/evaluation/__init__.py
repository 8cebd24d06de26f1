"""Metrics, feature extractors and repeated evaluation reports."""

from .extractors import FeatureExtractors
from .metrics import (
    GaussianStats,
    bleu,
    contrastive_loss,
    diversity,
    fid,
    multimodal_distance,
    multimodality,
    r_precision,
)
from .report import EvalBundle, MetricReport, evaluate_suite

__all__ = [
    "EvalBundle", "FeatureExtractors", "GaussianStats", "MetricReport", "bleu", "contrastive_loss",
    "diversity", "evaluate_suite", "fid", "multimodal_distance", "multimodality", "r_precision",
]
