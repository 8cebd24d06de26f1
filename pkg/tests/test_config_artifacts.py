import numpy as np
import pytest
import torch

from motok.artifacts import load_estimator, save_estimator
from motok.config import ConfigError, load_config, parse_override, settings_hash, stage_hash
from motok.diff.checkpoint import CheckpointError


def test_override_parsing():
    assert parse_override("vq.beta=0.5") == {"vq": {"beta": 0.5}}
    assert parse_override("data.mirror=false") == {"data": {"mirror": False}}
    with pytest.raises(ConfigError):
        parse_override("vq.beta")


def test_numeric_strings_and_unknown_keys(tmp_path):
    assert load_config(overrides=["vq.lr=1e-3"])["vq"]["lr"] == 1e-3
    f = tmp_path / "c.yaml"
    f.write_text("seed: 1\nm2t:\n  lr: 2e-4\n")
    assert load_config(f)["m2t"]["lr"] == 2e-4
    with pytest.raises(ConfigError, match="unknown"):
        load_config(overrides=["vq.codebooksize=3"])
    with pytest.raises(ConfigError, match="number"):
        load_config(overrides=["vq.lr=fast"])
    with pytest.raises(ConfigError, match="seed"):
        load_config(overrides=["seed=null"])


def test_hashes_ignore_locations_but_track_settings():
    a = load_config()
    b = load_config(overrides=["corpus=elsewhere.jsonl", "output_dir=o"])
    c = load_config(overrides=["vq.beta=0.25"])
    assert settings_hash(a) == settings_hash(b) != settings_hash(c)
    assert stage_hash(a, "m2t", ["x"]) == stage_hash(c, "m2t", ["x"])
    assert stage_hash(a, "vq") != stage_hash(c, "vq")
    assert stage_hash(a, "m2t", ["x"]) != stage_hash(a, "m2t", ["y"])


@pytest.mark.parametrize("name", ["vq", "m2t", "t2m", "ex"])
def test_estimator_round_trip(tiny, tmp_path, name):
    est = {"vq": tiny.vq, "m2t": tiny.m2t, "t2m": tiny.t2m, "ex": tiny.ex}[name]
    path = tmp_path / "e.ckpt"
    sha = save_estimator(path, est, {"note": 1})
    assert save_estimator(tmp_path / "f.ckpt", est, {"note": 1}) == sha
    back, meta = load_estimator(path)
    assert meta == {"note": 1} and back.get_params() == est.get_params()
    d = tiny.data
    if name == "vq":
        assert np.array_equal(back.tokenize(d.test_motions[0]), est.tokenize(d.test_motions[0]))
    elif name == "m2t":
        assert np.array_equal(back.caption_beam(tiny.tokens[0])[0], est.caption_beam(tiny.tokens[0])[0])
    elif name == "t2m":
        assert np.array_equal(back.generate(tiny.texts[0], 5), est.generate(tiny.texts[0], 5))
    else:
        assert np.array_equal(back.motion_features(d.test_motions[:3]), est.motion_features(d.test_motions[:3]))


def test_normalizer_round_trip_and_kind_check(tiny, tmp_path):
    path = tmp_path / "n.ckpt"
    save_estimator(path, tiny.data.normalizer)
    back, _ = load_estimator(path, kind="normalizer")
    m = tiny.corpus.entries[0].motion
    assert np.array_equal(back.transform(m), tiny.data.normalizer.transform(m))
    with pytest.raises(CheckpointError, match="expected"):
        load_estimator(path, kind="vq")
    with pytest.raises(TypeError):
        save_estimator(path, torch.nn.Linear(2, 2))
