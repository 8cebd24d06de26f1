import json
from pathlib import Path

import numpy as np
import pytest

from motok import cli
from motok.artifacts import load_estimator
from motok.data.corpus import Corpus, load_corpus, save_corpus

from conftest import TINY_OVERRIDES


def run(ws, *argv, extra=()):
    args = list(argv) + ["--checkpoint-dir", str(ws / "ckpt"), "--output-dir", str(ws / "out"),
                         "--corpus", str(ws / "corpus.jsonl")]
    for o in TINY_OVERRIDES + tuple(extra):
        args += ["--set", o]
    return cli.main(args)


def full_run(ws):
    assert run(ws, "synth-data") == 0
    for stage in ("vq", "m2t", "t2m", "extractors"):
        assert run(ws, "train", stage) == 0, stage
    assert run(ws, "evaluate") == 0


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    full_run(a)
    full_run(b)
    return a, b


def test_pipeline_is_bit_reproducible(runs):
    a, b = runs
    for name in ("normalizer.ckpt", "vocab.txt", "vq.ckpt", "m2t.ckpt", "t2m.ckpt", "extractors.ckpt",
                 "vq_loss.csv", "t2m_loss.csv", "manifest.json"):
        assert (a / "ckpt" / name).read_bytes() == (b / "ckpt" / name).read_bytes(), name
    for name in ("report.txt", "report.tsv", "report.json"):
        assert (a / "out" / name).read_bytes() == (b / "out" / name).read_bytes(), name
    manifest = json.loads((a / "ckpt" / "manifest.json").read_text())
    assert set(manifest["stages"]) >= {"normalizer", "vq", "m2t", "t2m", "extractors", "evaluate"}
    _, meta = load_estimator(a / "ckpt" / "t2m.ckpt")
    assert set(meta["upstream_files"]) == {"normalizer", "vq", "m2t"}


def test_report_tables(runs):
    a, _ = runs
    rows = (a / "out" / "report.tsv").read_text().splitlines()
    assert rows[0].startswith("# config ") and rows[1] == "metric\tmean\tci95\tn"
    report = json.loads((a / "out" / "report.json").read_text())
    assert {m["metric"] for m in report["metrics"]} >= {"t2m_fid", "m2t_bleu4", "real_r_precision_top1"}


def test_generate_records(runs, capsys):
    a, _ = runs
    out = a / "gen.jsonl"
    assert run(a, "generate", "a person walks forward", "--seeds", "1", "2", "3", "--out", str(out)) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["seed"] for r in recs] == [1, 2, 3]
    for r in recs:
        ids = r["token_ids"]
        assert ids[0] == 16 and ids[-1] == 17
        assert len(r["frames"]) == 4 * (len(ids) - 2) and len(r["frames"][0]) == 95
    assert run(a, "generate", "a person walks forward", "--seeds", "1", "--max-tokens", "1", "--out", str(out)) == 0
    assert len(json.loads(out.read_text())["token_ids"]) == 3
    again = a / "gen2.jsonl"
    run(a, "generate", "a person walks forward", "--seeds", "2", "--out", str(again))
    assert json.loads(again.read_text()) == recs[1]


def test_generate_text_errors(runs, caplog):
    a, _ = runs
    assert run(a, "generate", "   ") == 2
    with caplog.at_level("WARNING"):
        assert run(a, "generate", "a person zorbles", "--out", str(a / "x.jsonl")) == 0
    assert "zorbles" in caplog.text


def test_generate_plot(runs):
    pytest.importorskip("matplotlib")
    a, _ = runs
    assert run(a, "generate", "a person jumps", "--seeds", "0", "1", "--out", str(a / "p.jsonl"),
               "--plot", str(a / "plots")) == 0
    assert sorted(p.name for p in (a / "plots").iterdir()) == ["joints_seed0.png", "joints_seed1.png",
                                                               "trajectories.png"]


def _test_file(ws, n=3):
    corpus = load_corpus(ws / "corpus.jsonl")
    path = ws / "few.jsonl"
    save_corpus(Corpus(corpus.split("test")[:n], corpus.layout), path)
    return path


def test_tokenize_and_caption(runs):
    a, _ = runs
    motions = _test_file(a)
    assert run(a, "tokenize", str(motions), "--out", str(a / "tok.jsonl")) == 0
    toks = [json.loads(line) for line in (a / "tok.jsonl").read_text().splitlines()]
    assert len(toks) == 3
    for t in toks:
        assert len(t["token_ids"]) == t["source_frame_count"] // 4 + 2
    assert run(a, "caption", str(motions), "--beam", "1", "--out", str(a / "c1.jsonl")) == 0
    caps = [json.loads(line) for line in (a / "c1.jsonl").read_text().splitlines()]
    m2t, _ = load_estimator(a / "ckpt" / "m2t.ckpt")
    for t, c in zip(toks, caps):
        ids, lp = m2t.caption_greedy(np.array(t["token_ids"]))
        assert c["token_ids"] == ids.tolist() and c["log_prob"] == pytest.approx(lp)
        assert c["token_ids"][0] == 1 and c["token_ids"][-1] == 2
    assert run(a, "caption", str(motions), "--out", str(a / "c2.jsonl")) == 0


def test_token_contexts_and_show_config(runs, capsys):
    a, _ = runs
    assert run(a, "token-contexts", "--out", str(a / "ctx.jsonl")) == 0
    ctx = [json.loads(line) for line in (a / "ctx.jsonl").read_text().splitlines()]
    assert len(ctx) == 16 and len(ctx[0]["frames"]) == 4
    capsys.readouterr()
    assert run(a, "show-config") == 0
    assert "codebook_size: 16" in capsys.readouterr().out


def test_dump_features(runs):
    a, _ = runs
    assert run(a, "evaluate", "--repetitions", "2", "--dump-features") == 0
    first = json.loads((a / "out" / "features.jsonl").read_text().splitlines()[0])
    assert set(first) == {"id", "vector"} and len(first["vector"]) == 8


def test_overwrite_guard(runs):
    a, _ = runs
    assert run(a, "train", "extractors", extra=["extractors.n_steps=41"]) == 2
    assert run(a, "train", "extractors") == 0  # same config: allowed
    assert run(a, "train", "extractors", "--force", extra=["extractors.n_steps=41"]) == 0


def test_usage_and_dependency_errors(tmp_path, monkeypatch):
    assert run(tmp_path, "train", "vq") == 3  # no corpus
    assert run(tmp_path, "synth-data", extra=["data.n_entries=40"]) == 0
    assert run(tmp_path, "train", "m2t") == 3  # no vq
    assert run(tmp_path, "train", "vq") == 0
    assert run(tmp_path, "train", "t2m") == 3  # inverse alignment without m2t
    assert run(tmp_path, "generate", "a person jumps") == 3
    assert run(tmp_path, "show-config", extra=["vq.nonsense=1"]) == 2
    assert run(tmp_path, "synth-data", "--spec", str(tmp_path / "missing.yaml")) == 2
    assert run(tmp_path, "show-config", "--config", str(tmp_path / "missing.yaml")) == 2
    assert run(tmp_path, "tokenize", str(tmp_path / "missing.jsonl")) == 2
    assert run(tmp_path, "train", "t2m", "--no-inverse-alignment") == 0
    monkeypatch.setenv(cli.ENV_CHECKPOINT_DIR, str(tmp_path / "elsewhere"))
    assert cli.main(["generate", "a person jumps", "--corpus", str(tmp_path / "corpus.jsonl")]) == 3


def test_divergence_exit_code(tmp_path):
    assert run(tmp_path, "synth-data", extra=["data.n_entries=40"]) == 0
    assert run(tmp_path, "train", "vq", extra=["vq.lr=1e30", "vq.dtype=float32"]) == 4
    assert (tmp_path / "ckpt" / "vq.diverged.ckpt").is_file()
    assert not (tmp_path / "ckpt" / "vq.ckpt").exists()


def test_config_file_and_preset(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("preset: paper-scale\nseed: 7\nvq:\n  beta: 0.5\n")
    assert cli.main(["show-config", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "codebook_size: 1024" in out and "seed: 7" in out and "beta: 0.5" in out
    assert cli.main(["show-config", "--preset", "nope"]) == 2
