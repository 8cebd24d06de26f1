"""``motok`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 missing or stale
dependency (checkpoint, optional package), 4 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import artifacts, pipeline
from .config import STAGES, ConfigError, dump_config, load_config, settings_hash, stage_hash
from .data.corpus import CorpusFormatError, load_corpus, save_corpus
from .data.synth import SynthSpec, synth_corpus
from .data.vocab import UNK, Vocabulary
from .diff import checkpoint
from .diff.checkpoint import CheckpointError, file_hash
from .diff.optim import NonFiniteGradientError
from ._validation import TrainingDivergedError

logger = logging.getLogger("motok")

EXIT_OK, EXIT_USAGE, EXIT_DEPENDENCY, EXIT_NUMERICAL = 0, 2, 3, 4
ENV_CHECKPOINT_DIR = "MOTOK_CHECKPOINT_DIR"

FILES = {
    "normalizer": "normalizer.ckpt",
    "vocab": "vocab.txt",
    "vq": "vq.ckpt",
    "m2t": "m2t.ckpt",
    "t2m": "t2m.ckpt",
    "extractors": "extractors.ckpt",
}
NEEDS = {"m2t": ("vq",), "t2m": ("vq",), "extractors": ()}


class UsageError(Exception):
    pass


class DependencyError(Exception):
    pass


# ------------------------------------------------------------------ plumbing
class Workspace:
    """Resolved config plus the checkpoint directory and its manifest."""

    def __init__(self, cfg, checkpoint_dir):
        self.cfg = cfg
        self.dir = Path(checkpoint_dir)
        self.manifest_path = self.dir / "manifest.json"

    def path(self, key):
        return self.dir / FILES[key]

    def manifest(self):
        if self.manifest_path.is_file():
            return json.loads(self.manifest_path.read_text())
        return {"stages": {}}

    def record(self, stage, **info):
        m = self.manifest()
        m["config_hash"] = settings_hash(self.cfg)
        m["stages"][stage] = info
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")

    def corpus(self):
        path = Path(self.cfg["corpus"])
        if not path.is_file():
            raise DependencyError(f"corpus {path} not found; run `motok synth-data --out {path}` first")
        return load_corpus(path), file_hash(path)

    def require(self, key, hint=None):
        p = self.path(key)
        if not p.is_file():
            stage = hint or key
            raise DependencyError(f"missing {p.name} in {self.dir}; run `motok train {stage}` first")
        return p

    def load(self, key, hint=None):
        p = self.require(key, hint)
        try:
            est, meta = artifacts.load_estimator(p)
        except CheckpointError as exc:
            raise DependencyError(f"unreadable checkpoint {p}: {exc}") from exc
        for name, digest in meta.get("upstream_files", {}).items():
            up = self.path(name)
            if up.is_file() and file_hash(up) != digest:
                raise DependencyError(f"{p.name} was built from a different {up.name}; retrain `{key}`")
        return est

    def vocab(self):
        return Vocabulary.load(self.require("vocab", "vq"))


def _workspace(args):
    try:
        cfg = load_config(args.config, args.preset, args.set or ())
    except (ConfigError, yaml.YAMLError) as exc:
        raise UsageError(str(exc)) from exc
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "corpus", None):
        cfg["corpus"] = args.corpus
    ckpt = args.checkpoint_dir or os.environ.get(ENV_CHECKPOINT_DIR) or cfg["checkpoint_dir"]
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    return Workspace(cfg, ckpt)


def _write_jsonl(path, records):
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _write_history(path, history):
    keys = sorted({k for h in history for k in h})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(history)


def _guard_overwrite(ws, key, digest, force):
    """Refuse to replace a checkpoint built from a different configuration."""
    p = ws.path(key)
    if p.is_file() and not force:
        try:
            _, meta = artifacts.load_estimator(p)
        except CheckpointError:
            meta = {}
        if meta.get("stage_hash") != digest:
            raise UsageError(f"{p} was trained with a different configuration; pass --force to replace it")


# ------------------------------------------------------------------ commands
def cmd_synth_data(args):
    ws = _workspace(args)
    overrides = {}
    if args.spec:
        spec_path = Path(args.spec)
        if not spec_path.is_file():
            raise UsageError(f"spec file {args.spec} does not exist")
        overrides = yaml.safe_load(spec_path.read_text()) or {}
        if "primitives" in overrides:
            overrides["primitives"] = tuple(overrides["primitives"])
    n = args.n_entries or overrides.pop("n_entries", ws.cfg["data"]["n_entries"])
    try:
        spec = SynthSpec(n_entries=n, **overrides)
        corpus = synth_corpus(spec, np.random.default_rng(ws.cfg["seed"]))
    except TypeError as exc:
        raise UsageError(f"bad synthetic spec: {exc}") from exc
    out = Path(args.out or ws.cfg["corpus"])
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_corpus(corpus, out)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc
    sizes = corpus.split_sizes()
    print(f"wrote {len(corpus)} entries to {out}: " + " ".join(f"{k}={v}" for k, v in sizes.items()))


def _prepared(ws, corpus, corpus_hash):
    """Normaliser and vocabulary, refit deterministically and saved if absent or stale."""
    data = pipeline.prepare(corpus, ws.cfg)
    digest = stage_hash(ws.cfg, "data", [corpus_hash])
    ws.dir.mkdir(parents=True, exist_ok=True)
    if not ws.path("normalizer").is_file() or ws.manifest()["stages"].get("normalizer", {}).get("stage_hash") != digest:
        sha = artifacts.save_estimator(ws.path("normalizer"), data.normalizer,
                                       {"stage_hash": digest, "corpus_hash": corpus_hash})
        data.vocab.save(ws.path("vocab"))
        ws.record("normalizer", file=FILES["normalizer"], sha256=sha, stage_hash=digest,
                  upstream={"corpus": corpus_hash}, vocab_sha256=file_hash(ws.path("vocab")))
    return data


def cmd_train(args):
    ws = _workspace(args)
    stage = args.stage
    cfg = ws.cfg
    if stage == "t2m" and args.no_inverse_alignment:
        cfg["t2m"]["ia_weight"] = 0.0
    for need in NEEDS.get(stage, ()):
        ws.require(need)
    use_ia = stage == "t2m" and cfg["t2m"]["ia_weight"] > 0 and not args.transformer
    if use_ia and not ws.path("m2t").is_file():
        raise DependencyError("inverse alignment needs a trained motion2text model; run `motok train m2t` "
                              "first or pass --no-inverse-alignment")
    corpus, corpus_hash = ws.corpus()
    data = _prepared(ws, corpus, corpus_hash)

    upstream = {"normalizer": file_hash(ws.path("normalizer"))}
    if stage in ("m2t", "t2m"):
        upstream["vq"] = file_hash(ws.path("vq"))
    if use_ia:
        upstream["m2t"] = file_hash(ws.path("m2t"))
    variant = "transformer" if args.transformer else "gru"
    digest = stage_hash(cfg, stage if stage != "extractors" else "extractors",
                        [corpus_hash, variant] + [upstream[k] for k in sorted(upstream)])
    _guard_overwrite(ws, stage, digest, args.force)

    try:
        est = _fit_stage(ws, stage, data, args.transformer, use_ia)
    except TrainingDivergedError as exc:
        if exc.state is not None:
            path = ws.dir / f"{stage}.diverged.ckpt"
            tensors = {k: v.detach().cpu().numpy() for k, v in exc.state.items()}
            checkpoint.save(path, "diverged", {"stage": stage, "step": exc.step, "stage_hash": digest}, tensors)
            logger.error("last good parameters written to %s", path)
        raise
    meta = {"stage_hash": digest, "config_hash": settings_hash(cfg), "corpus_hash": corpus_hash,
            "upstream_files": upstream}
    sha = artifacts.save_estimator(ws.path(stage), est, meta)
    _write_history(ws.dir / f"{stage}_loss.csv", est.history_)
    ws.record(stage, file=FILES[stage], sha256=sha, stage_hash=digest, upstream=upstream, variant=variant)
    print(f"trained {stage}: {ws.path(stage)} sha256={sha[:16]}")


def _fit_stage(ws, stage, data, transformer, use_ia):
    cfg = ws.cfg
    if stage == "vq":
        return pipeline.train_vq(data, cfg)
    if stage == "extractors":
        return pipeline.train_extractors(data, cfg)
    vq = ws.load("vq")
    tokens, texts = pipeline.token_pairs(data, vq, cfg)
    if stage == "m2t":
        return pipeline.train_m2t(tokens, texts, data.vocab, cfg, vq.codebook_size)
    if transformer:
        return pipeline.train_t2m_transformer(tokens, texts, data.vocab, cfg, vq.codebook_size)
    captioner = ws.load("m2t") if use_ia else None
    return pipeline.train_t2m(tokens, texts, data.vocab, cfg, vq.codebook_size, captioner, use_ia)


def _read_motions(ws, path, normalizer):
    try:
        corpus = load_corpus(path)
    except FileNotFoundError as exc:
        raise UsageError(f"motion file {path} not found") from exc
    except CorpusFormatError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if corpus.layout.n_channels != normalizer.n_features_in_:
        raise UsageError(f"layout mismatch: file has {corpus.layout.n_channels} channels, "
                         f"model expects {normalizer.n_features_in_}")
    return corpus.entries, [normalizer.transform(e.motion) for e in corpus.entries]


def cmd_tokenize(args):
    ws = _workspace(args)
    normalizer, vq = ws.load("normalizer", "vq"), ws.load("vq")
    entries, motions = _read_motions(ws, args.motions, normalizer)
    _write_jsonl(args.out, ({"motion_id": e.id, "token_ids": vq.tokenize(m).tolist(), "source_frame_count": len(m)}
                            for e, m in zip(entries, motions)))


def cmd_caption(args):
    ws = _workspace(args)
    normalizer, vq, m2t, vocab = ws.load("normalizer", "vq"), ws.load("vq"), ws.load("m2t"), ws.vocab()
    entries, motions = _read_motions(ws, args.motions, normalizer)
    records = []
    for e, m in zip(entries, motions):
        ids, logp = m2t.caption_beam(vq.tokenize(m), beam_size=args.beam)
        records.append({"motion_id": e.id, "text": vocab.decode(ids), "token_ids": [int(i) for i in ids],
                        "log_prob": float(logp)})
    _write_jsonl(args.out, records)


def _encode_text(vocab, text):
    if not text or not text.strip():
        raise UsageError("text must not be empty")
    unknown = []
    ids = vocab.encode(text.strip().lower(), unknown)
    if unknown:
        logger.warning("unknown words mapped to UNK: %s", ", ".join(unknown))
    if (ids[1:-1] == UNK).all():
        logger.warning("every word is unknown to the vocabulary")
    return ids


def cmd_generate(args):
    ws = _workspace(args)
    normalizer, vq, t2m, vocab = ws.load("normalizer", "vq"), ws.load("vq"), ws.load("t2m"), ws.vocab()
    ids = _encode_text(vocab, args.text)
    seqs, _ = t2m.sample([ids] * len(args.seeds), args.seeds, args.max_tokens)
    records = []
    for seed, seq in zip(args.seeds, seqs):
        frames = normalizer.inverse_transform(vq.detokenize(seq))
        records.append({"text": args.text, "seed": int(seed), "token_ids": [int(t) for t in seq],
                        "frames": frames.tolist()})
    _write_jsonl(args.out, records)
    if args.plot:
        from .plots import plot_generations
        try:
            files = plot_generations(records, args.plot, n_joints=ws.cfg["data"]["n_joints"])
        except ImportError as exc:
            raise DependencyError("plotting needs matplotlib (pip install 'motok[plot]')") from exc
        for f in files:
            print(f"plot: {f}", file=sys.stderr)


def cmd_evaluate(args):
    from .evaluation import EvalBundle, evaluate_suite

    ws = _workspace(args)
    cfg = ws.cfg
    corpus, _ = ws.corpus()
    normalizer, vq, ex, vocab = ws.load("normalizer", "vq"), ws.load("vq"), ws.load("extractors"), ws.vocab()
    captioner = ws.load("m2t") if ws.path("m2t").is_file() else None
    generator = ws.load("t2m") if ws.path("t2m").is_file() else None
    test = corpus.split("test")
    motions = [normalizer.transform(e.motion) for e in test]
    texts = [[vocab.encode(t) for t in e.texts] for e in test]
    reps = args.repetitions or cfg["eval"]["repetitions"]
    e = cfg["eval"]
    report = evaluate_suite(EvalBundle(vq, ex, vocab, captioner, generator), motions, texts, reps,
                            master_seed=pipeline.stage_seed(cfg, "eval"), diversity_size=e["diversity_size"],
                            mm_size=e["mm_size"], mm_texts=e["mm_texts"])
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    header = f"# config {settings_hash(cfg)}\n"
    (out / "report.txt").write_text(header + report.to_text())
    (out / "report.tsv").write_text(header + report.to_table())
    (out / "report.json").write_text(report.to_json() + "\n")
    if args.dump_features:
        feats = ex.motion_features(motions)
        _write_jsonl(out / "features.jsonl", ({"id": en.id, "vector": f.tolist()} for en, f in zip(test, feats)))
    ws.record("evaluate", report="report.json", report_sha256=file_hash(out / "report.json"))
    sys.stdout.write(report.to_text())


def cmd_token_contexts(args):
    ws = _workspace(args)
    normalizer, vq = ws.load("normalizer", "vq"), ws.load("vq")
    records = []
    for k in range(vq.codebook_size):
        frames = normalizer.inverse_transform(vq.token_context(k))
        records.append({"token": k, "frames": frames.tolist()})
    _write_jsonl(args.out, records)


def cmd_show_config(args):
    ws = _workspace(args)
    sys.stdout.write(dump_config(ws.cfg))


# ------------------------------------------------------------------ parser
def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--preset", default="desk", help="desk or paper-scale")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--checkpoint-dir", help=f"defaults to ${ENV_CHECKPOINT_DIR} or the config value")
    common.add_argument("--output-dir")
    common.add_argument("--corpus", help="corpus file (line-delimited JSON)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="motok", description="Motion tokens to and from text.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", parents=[common], help="write a synthetic corpus")
    s.add_argument("--out")
    s.add_argument("--n-entries", type=int)
    s.add_argument("--spec", help="YAML file with synthetic corpus options")
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train", parents=[common], help="train one stage")
    s.add_argument("stage", choices=STAGES)
    s.add_argument("--no-inverse-alignment", action="store_true", help="t2m baseline without inverse alignment")
    s.add_argument("--transformer", action="store_true", help="Transformer t2m variant")
    s.add_argument("--force", action="store_true", help="replace a checkpoint from a different config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tokenize", parents=[common], help="motion file to token ids")
    s.add_argument("motions")
    s.add_argument("--out")
    s.set_defaults(func=cmd_tokenize)

    s = sub.add_parser("caption", parents=[common], help="describe motions in a corpus-format file")
    s.add_argument("motions")
    s.add_argument("--beam", type=int, default=2)
    s.add_argument("--out")
    s.set_defaults(func=cmd_caption)

    s = sub.add_parser("generate", parents=[common], help="motions for a text, one per seed")
    s.add_argument("text")
    s.add_argument("--seeds", type=int, nargs="+", default=[0])
    s.add_argument("--max-tokens", type=int)
    s.add_argument("--plot", metavar="DIR", help="write trajectory and joint-curve images")
    s.add_argument("--out")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", parents=[common], help="metric suite on the test split")
    s.add_argument("--repetitions", type=int)
    s.add_argument("--dump-features", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("token-contexts", parents=[common], help="4-frame segment of every codebook entry")
    s.add_argument("--out")
    s.set_defaults(func=cmd_token_contexts)

    s = sub.add_parser("show-config", parents=[common], help="print the resolved config")
    s.set_defaults(func=cmd_show_config)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"motok: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DependencyError as exc:
        print(f"motok: missing dependency: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (TrainingDivergedError, NonFiniteGradientError, FloatingPointError) as exc:
        print(f"motok: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
