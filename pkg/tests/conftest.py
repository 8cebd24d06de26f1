import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile("motok", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("motok")
torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def gen():
    g = torch.Generator()
    g.manual_seed(1234)
    return g


# small enough for unit tests, large enough for a 32-item retrieval pool
TINY_OVERRIDES = (
    "data.n_entries=240",
    "data.crops_per_entry=1",
    "vq.codebook_size=16", "vq.code_dim=8", "vq.hidden=16", "vq.n_steps=40", "vq.batch_size=8", "vq.window=32",
    "m2t.d_model=16", "m2t.n_heads=2", "m2t.n_enc=1", "m2t.n_dec=1", "m2t.n_steps=20", "m2t.batch_size=8",
    "m2t.max_len=12",
    "t2m.word_dim=8", "t2m.enc_hidden=8", "t2m.dec_hidden=16", "t2m.att_dim=8", "t2m.n_steps=10",
    "t2m.batch_size=8", "t2m.max_tokens=12",
    "extractors.word_dim=8", "extractors.hidden=16", "extractors.feature_dim=8", "extractors.n_steps=40",
    "extractors.batch_size=16",
    "eval.repetitions=2", "eval.diversity_size=10", "eval.mm_size=2", "eval.mm_texts=3",
)


@pytest.fixture(scope="session")
def tiny():
    """A whole pipeline trained for a handful of steps."""
    from types import SimpleNamespace

    from motok import pipeline
    from motok.config import load_config
    from motok.data.synth import SynthSpec, synth_corpus

    cfg = load_config(overrides=TINY_OVERRIDES)
    corpus = synth_corpus(SynthSpec(n_entries=cfg["data"]["n_entries"]), cfg["seed"])
    data = pipeline.prepare(corpus, cfg)
    vq = pipeline.train_vq(data, cfg)
    tokens, texts = pipeline.token_pairs(data, vq, cfg)
    m2t = pipeline.train_m2t(tokens, texts, data.vocab, cfg, vq.codebook_size)
    t2m = pipeline.train_t2m(tokens, texts, data.vocab, cfg, vq.codebook_size, captioner=m2t)
    ex = pipeline.train_extractors(data, cfg)
    return SimpleNamespace(cfg=cfg, corpus=corpus, data=data, vq=vq, m2t=m2t, t2m=t2m, ex=ex,
                           tokens=tokens, texts=texts)


# acceptance outcomes, printed once at the end of the run: (number, passed, detail)
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
