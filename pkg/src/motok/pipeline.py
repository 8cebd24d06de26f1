"""Staged training workflow shared by the command line and the end-to-end tests.

Stage order: normaliser + vocabulary, vq, m2t, t2m, extractors. Only the
train split feeds any fitting step.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .data.augment import mirror_augment, random_crop
from .data.normalize import PoseNormalizer
from .data.vocab import Vocabulary
from .evaluation.extractors import FeatureExtractors
from .motion2text import MotionCaptioner
from .quantizer import MotionTokenizer
from .text2motion import TextToMotion, TextToMotionTransformer

logger = logging.getLogger(__name__)

# per-stage offsets from the master seed
SEED_OFFSETS = {"vq": 0, "m2t": 1000, "t2m": 2000, "extractors": 3000, "pairs": 4000, "eval": 5000}


def stage_seed(cfg, stage):
    return int(cfg["seed"]) + SEED_OFFSETS[stage]


@dataclass
class PreparedData:
    normalizer: PoseNormalizer
    vocab: Vocabulary
    train_motions: list  # normalised, mirrored copies included
    train_texts: list  # list of description strings per motion
    val_motions: list
    test_motions: list
    test_texts: list


def train_entries(corpus, mirror=True):
    entries = corpus.split("train")
    if mirror:
        entries = entries + [mirror_augment(e, corpus.layout) for e in entries]
    return entries


def prepare(corpus, cfg):
    """Fit the normaliser and vocabulary on the (mirrored) train split."""
    entries = train_entries(corpus, cfg["data"].get("mirror", True))
    if not entries:
        raise ValueError("corpus has no train entries")
    normalizer = PoseNormalizer(n_joints=cfg["data"]["n_joints"]).fit(entries)
    vocab = Vocabulary.from_texts([t for e in entries for t in e.texts])
    test = corpus.split("test")
    return PreparedData(
        normalizer=normalizer,
        vocab=vocab,
        train_motions=[normalizer.transform(e.motion) for e in entries],
        train_texts=[list(e.texts) for e in entries],
        val_motions=[normalizer.transform(e.motion) for e in corpus.split("val")],
        test_motions=[normalizer.transform(e.motion) for e in test],
        test_texts=[[vocab.encode(t) for t in e.texts] for e in test],
    )


def train_vq(data, cfg):
    params = dict(cfg["vq"], n_joints=cfg["data"]["n_joints"], random_state=stage_seed(cfg, "vq"))
    return MotionTokenizer(**params).fit(data.train_motions, validation=data.val_motions or None)


def token_pairs(data, tokenizer, cfg):
    """(motion tokens, text ids) training pairs: crops of every motion times every description.

    The first variant of each motion is uncropped; the rest use random crops.
    """
    rng = np.random.default_rng(stage_seed(cfg, "pairs"))
    n_variants = max(1, int(cfg["data"].get("crops_per_entry", 1)))
    tokens, texts = [], []
    for motion, descriptions in zip(data.train_motions, data.train_texts):
        ids = [data.vocab.encode(t) for t in descriptions]
        for v in range(n_variants):
            m = motion if v == 0 or len(motion) <= 8 else random_crop(motion, rng)
            tok = tokenizer.tokenize(m)
            for t in ids:
                tokens.append(tok)
                texts.append(t)
    return tokens, texts


def train_m2t(tokens, texts, vocab, cfg, codebook_size):
    params = dict(cfg["m2t"], codebook_size=codebook_size, vocab_size=len(vocab),
                  random_state=stage_seed(cfg, "m2t"))
    return MotionCaptioner(**params).fit(tokens, texts)


def train_t2m(tokens, texts, vocab, cfg, codebook_size, captioner=None, inverse_alignment=True, seed_offset=0):
    params = dict(cfg["t2m"], codebook_size=codebook_size, vocab_size=len(vocab),
                  random_state=stage_seed(cfg, "t2m") + seed_offset)
    if not inverse_alignment:
        params["ia_weight"] = 0.0
    return TextToMotion(**params).fit(texts, tokens, captioner=captioner if params["ia_weight"] > 0 else None)


def train_t2m_transformer(tokens, texts, vocab, cfg, codebook_size):
    m = cfg["m2t"]
    params = {k: m[k] for k in ("d_model", "n_heads", "n_enc", "n_dec", "dropout", "batch_size", "lr", "dtype")}
    params.update(n_steps=cfg["t2m"]["n_steps"], max_tokens=cfg["t2m"]["max_tokens"])
    return TextToMotionTransformer(codebook_size=codebook_size, vocab_size=len(vocab),
                                   random_state=stage_seed(cfg, "t2m"), **params).fit(texts, tokens)


def train_extractors(data, cfg):
    motions, texts = [], []
    for motion, descriptions in zip(data.train_motions, data.train_texts):
        for t in descriptions:
            motions.append(motion)
            texts.append(data.vocab.encode(t))
    params = dict(cfg["extractors"], n_joints=cfg["data"]["n_joints"], vocab_size=len(data.vocab),
                  random_state=stage_seed(cfg, "extractors"))
    return FeatureExtractors(**params).fit(motions, texts)
