"""Pose features, synthetic corpus, normalisation and augmentation."""

from .augment import crop_to_multiple, mirror_augment, mirror_motion, mirror_text, random_crop
from .corpus import SPLITS, Corpus, CorpusFormatError, Entry, load_corpus, save_corpus
from .layout import PoseFeatureLayout, channel_count
from .normalize import PoseNormalizer
from .synth import SynthSpec, synth_corpus
from .vocab import BOS, EOS, PAD, UNK, Vocabulary

__all__ = [
    "BOS", "EOS", "PAD", "SPLITS", "UNK",
    "Corpus", "CorpusFormatError", "Entry", "PoseFeatureLayout", "PoseNormalizer",
    "SynthSpec", "Vocabulary", "channel_count", "crop_to_multiple", "load_corpus",
    "mirror_augment", "mirror_motion", "mirror_text", "random_crop", "save_corpus",
    "synth_corpus",
]
