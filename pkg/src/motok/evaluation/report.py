"""Repeated evaluation runs summarised as mean and 95% confidence half-width."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics

Z95 = 1.96


@dataclass
class MetricReport:
    values: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add(self, name, value):
        self.values.setdefault(name, []).append(float(value))

    def fail(self, name, error):
        self.errors.setdefault(name, str(error))

    def mean(self, name):
        return float(np.mean(self.values[name]))

    def ci95(self, name):
        """Normal-approximation half-width; ``None`` below two repetitions."""
        v = np.asarray(self.values[name])
        if len(v) < 2:
            return None
        return float(Z95 * v.std(ddof=1) / math.sqrt(len(v)))

    def rows(self):
        return [(name, self.mean(name), self.ci95(name), len(self.values[name])) for name in sorted(self.values)]

    def to_dict(self):
        return {
            "metrics": [{"metric": m, "mean": mean, "ci95": ci, "n": n} for m, mean, ci, n in self.rows()],
            "errors": dict(sorted(self.errors.items())),
            "notes": list(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self):
        """Tab-separated ``metric, mean, ci95, n`` rows with a header."""
        lines = ["metric\tmean\tci95\tn"]
        for m, mean, ci, n in self.rows():
            lines.append(f"{m}\t{mean!r}\t{'' if ci is None else repr(ci)}\t{n}")
        return "\n".join(lines) + "\n"

    def to_text(self):
        width = max([len(m) for m in self.values] + [6])
        lines = []
        for m, mean, ci, n in self.rows():
            ci_txt = "n/a" if ci is None else f"{ci:.4f}"
            lines.append(f"{m:<{width}}  {mean:10.4f} +/- {ci_txt:<8} (n={n})")
        for m, err in sorted(self.errors.items()):
            lines.append(f"{m:<{width}}  ERROR: {err}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


@dataclass
class EvalBundle:
    """Frozen models for evaluation; ``captioner`` and ``generator`` may be missing."""

    tokenizer: object
    extractors: object
    vocab: object
    captioner: object = None
    generator: object = None


def _measure(report, name, fn):
    try:
        value = fn()
    except Exception as exc:  # any failing metric becomes an error entry
        report.fail(name, f"{type(exc).__name__}: {exc}")
        return None
    if np.ndim(value):
        for k, v in zip((1, 2, 3), value):
            report.add(f"{name}_top{k}", v)
    else:
        report.add(name, value)
    return value


def _interior(ids):
    return [int(i) for i in ids[1:-1]]


def evaluate_suite(bundle, test_motions, test_texts, repetitions=20, master_seed=0, diversity_size=50,
                   mm_size=10, mm_texts=16):
    """Run every available metric ``repetitions`` times.

    ``test_motions`` are normalised pose sequences; ``test_texts[i]`` lists the
    framed text-id arrays describing motion ``i``. Repetition seeds come from
    ``numpy.random.SeedSequence(master_seed)``.
    """
    report = MetricReport()
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    ex = bundle.extractors
    real_feat = ex.motion_features(test_motions)
    diversity_size = min(diversity_size, len(test_motions) // 2)
    seeds = np.random.SeedSequence(master_seed).spawn(repetitions)

    captions = None
    if bundle.captioner is None:
        report.notes.append("no motion2text checkpoint: caption metrics omitted")
    else:
        try:
            tokens = [bundle.tokenizer.tokenize(m) for m in test_motions]
            captions = [bundle.captioner.caption_beam(t)[0] for t in tokens]
            cap_feat = ex.text_features(captions)
        except Exception as exc:
            report.fail("m2t", f"{type(exc).__name__}: {exc}")
            captions = None
    if bundle.generator is None:
        report.notes.append("no text2motion checkpoint: generation metrics omitted")

    for seq in seeds:
        rng = np.random.default_rng(seq)
        choice = [texts[int(rng.integers(len(texts)))] for texts in test_texts]
        text_feat = ex.text_features(choice)
        _measure(report, "real_r_precision", lambda: metrics.r_precision(real_feat, text_feat, rng=rng))
        _measure(report, "real_mm_dist", lambda: metrics.multimodal_distance(text_feat, real_feat))
        _measure(report, "real_diversity", lambda: metrics.diversity(real_feat, diversity_size, rng))

        if bundle.generator is not None:
            gen_seeds = rng.integers(0, 2**31 - 1, size=len(choice))
            try:
                seqs, ended = bundle.generator.sample(choice, [int(s) for s in gen_seeds])
                gen_motions = [bundle.tokenizer.detokenize(s) for s in seqs]
                gen_feat = ex.motion_features(gen_motions)
            except Exception as exc:
                report.fail("t2m", f"{type(exc).__name__}: {exc}")
            else:
                report.add("t2m_eom_rate", float(np.mean(ended)))
                _measure(report, "t2m_r_precision", lambda: metrics.r_precision(gen_feat, text_feat, rng=rng))
                _measure(report, "t2m_mm_dist", lambda: metrics.multimodal_distance(text_feat, gen_feat))
                _measure(report, "t2m_fid", lambda: metrics.fid(metrics.GaussianStats.from_features(real_feat),
                                                                metrics.GaussianStats.from_features(gen_feat)))
                _measure(report, "t2m_diversity", lambda: metrics.diversity(gen_feat, diversity_size, rng))
                _measure(report, "t2m_multimodality",
                         lambda: _multimodality(bundle, choice, rng, mm_size, mm_texts))

        if captions is not None:
            _measure(report, "m2t_r_precision", lambda: metrics.r_precision(real_feat, cap_feat, rng=rng))
            _measure(report, "m2t_mm_dist", lambda: metrics.multimodal_distance(cap_feat, real_feat))
            refs = [[_interior(t) for t in texts] for texts in test_texts]
            cands = [_interior(c) for c in captions]
            _measure(report, "m2t_bleu1", lambda: metrics.bleu(cands, refs, 1))
            _measure(report, "m2t_bleu4", lambda: metrics.bleu(cands, refs, 4))
    return report


def _multimodality(bundle, texts, rng, mm_size, mm_texts):
    picked = rng.choice(len(texts), size=min(mm_texts, len(texts)), replace=False)
    batch, owners = [], []
    for c, i in enumerate(picked):
        batch.extend([texts[i]] * (2 * mm_size))
        owners.extend([c] * (2 * mm_size))
    seeds = rng.integers(0, 2**31 - 1, size=len(batch))
    seqs, _ = bundle.generator.sample(batch, [int(s) for s in seeds])
    feats = bundle.extractors.motion_features([bundle.tokenizer.detokenize(s) for s in seqs])
    owners = np.asarray(owners)
    groups = [feats[owners == c] for c in range(len(picked))]
    return metrics.multimodality(groups, mm_size, rng)
