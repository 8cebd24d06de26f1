"""Procedural motion-language corpus on the stick-figure skeleton.

Each primitive is a parametric trajectory generator plus the verb phrases
that describe it. Entries chain one to three primitives and carry one to
four descriptions. All text is already lemmatised.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Entry, assign_splits
from .skeleton import pose_features, stick_figure

SUBJECTS = ("a person", "someone", "the person", "a man")
CONNECTORS = ("then", "and then", "after that")

# joints of the stick figure
L_HAND, R_HAND, L_FOOT, R_FOOT, HEAD = 3, 5, 6, 7, 1


def _ease(u):
    """0 -> 1 -> 0 bump, smooth at both ends."""
    return np.sin(np.pi * u) ** 2


@dataclass(frozen=True)
class Primitive:
    name: str
    phrases: tuple
    mirror: str
    generator: object = field(repr=False, compare=False)


def _blank(n, j=8):
    return {
        "forward": np.zeros(n), "lateral": np.zeros(n), "turn": np.zeros(n),
        "lift": np.zeros(n), "flex": np.zeros((n, j)), "abduct": np.zeros((n, j)),
    }


def _walk(direction):
    def gen(n, rng):
        m = _blank(n)
        u = np.linspace(0.0, 1.0, n)
        steps = rng.uniform(1.5, 2.5)
        phase = 2 * np.pi * steps * u
        amp = rng.uniform(0.35, 0.55) * np.minimum(1.0, 4 * np.minimum(u, 1 - u) + 0.2)
        speed = rng.uniform(0.025, 0.04)
        m["forward"][:] = direction * speed
        m["flex"][:, L_FOOT] = -amp * np.sin(phase)
        m["flex"][:, R_FOOT] = amp * np.sin(phase)
        m["flex"][:, L_HAND] = 0.6 * amp * np.sin(phase)
        m["flex"][:, R_HAND] = -0.6 * amp * np.sin(phase)
        return m
    return gen


def _sidestep(side):
    def gen(n, rng):
        m = _blank(n)
        u = np.linspace(0.0, 1.0, n)
        amp = rng.uniform(0.2, 0.35)
        m["lateral"][:] = side * rng.uniform(0.015, 0.025)
        m["abduct"][:, L_FOOT] = amp * _ease(u)
        m["abduct"][:, R_FOOT] = -amp * _ease(u)
        return m
    return gen


def _turn(side):
    def gen(n, rng):
        m = _blank(n)
        u = np.linspace(0.0, 1.0, n)
        total = side * rng.uniform(0.4, 0.6) * np.pi
        w = _ease(u)
        m["turn"][:] = total * w / w.sum()
        m["flex"][:, L_FOOT] = -0.2 * np.sin(4 * np.pi * u)
        m["flex"][:, R_FOOT] = 0.2 * np.sin(4 * np.pi * u)
        return m
    return gen


def _raise_hand(side):
    hand = L_HAND if side > 0 else R_HAND

    def gen(n, rng):
        m = _blank(n)
        u = np.linspace(0.0, 1.0, n)
        top = rng.uniform(2.2, 2.8)
        m["abduct"][:, hand] = side * top * np.clip(1.6 * _ease(u), 0.0, 1.0)
        return m
    return gen


def _kick(side):
    foot = L_FOOT if side > 0 else R_FOOT
    hand = R_HAND if side > 0 else L_HAND

    def gen(n, rng):
        m = _blank(n)
        u = np.linspace(0.0, 1.0, n)
        height = rng.uniform(0.9, 1.3)
        m["flex"][:, foot] = -height * _ease(u) ** 2
        m["flex"][:, hand] = 0.4 * _ease(u)
        return m
    return gen


def _wave_both(n, rng):
    m = _blank(n)
    u = np.linspace(0.0, 1.0, n)
    lift = 2.3 * np.clip(2.0 * _ease(u), 0.0, 1.0)
    wave = rng.uniform(0.3, 0.5) * np.sin(2 * np.pi * rng.uniform(2.0, 3.0) * u) * _ease(u)
    m["abduct"][:, L_HAND] = lift + wave
    m["abduct"][:, R_HAND] = -(lift + wave)
    return m


def _jump(n, rng):
    m = _blank(n)
    u = np.linspace(0.0, 1.0, n)
    height = rng.uniform(0.25, 0.4)
    m["lift"][:] = height * np.sin(np.pi * u) ** 2
    tuck = 0.5 * _ease(u)
    m["flex"][:, L_FOOT] = tuck
    m["flex"][:, R_FOOT] = tuck
    m["abduct"][:, L_HAND] = 0.8 * _ease(u)
    m["abduct"][:, R_HAND] = -0.8 * _ease(u)
    return m


def _nod(n, rng):
    m = _blank(n)
    u = np.linspace(0.0, 1.0, n)
    m["flex"][:, HEAD] = rng.uniform(0.3, 0.5) * np.sin(2 * np.pi * 2 * u)
    return m


def default_primitives():
    return (
        Primitive("walk forward", ("walk forward", "walk straight ahead", "take step forward"), "walk forward", _walk(1.0)),
        Primitive("walk backward", ("walk backward", "step backward", "walk back"), "walk backward", _walk(-1.0)),
        Primitive("turn left", ("turn left", "turn to the left", "rotate to the left"), "turn right", _turn(1.0)),
        Primitive("turn right", ("turn right", "turn to the right", "rotate to the right"), "turn left", _turn(-1.0)),
        Primitive("raise left hand", ("raise left hand", "lift left arm", "raise left arm up"), "raise right hand", _raise_hand(1.0)),
        Primitive("raise right hand", ("raise right hand", "lift right arm", "raise right arm up"), "raise left hand", _raise_hand(-1.0)),
        Primitive("kick left leg", ("kick with left leg", "kick left foot forward", "kick left leg"), "kick right leg", _kick(1.0)),
        Primitive("kick right leg", ("kick with right leg", "kick right foot forward", "kick right leg"), "kick left leg", _kick(-1.0)),
        Primitive("wave both hands", ("wave both hands", "wave both arm above head", "wave hand in the air"), "wave both hands", _wave_both),
        Primitive("jump", ("jump", "jump up", "jump in place"), "jump", _jump),
        Primitive("step left", ("step to the left", "sidestep left", "move left sideways"), "step right", _sidestep(1.0)),
        Primitive("step right", ("step to the right", "sidestep right", "move right sideways"), "step left", _sidestep(-1.0)),
        Primitive("nod head", ("nod head", "nod", "nod head up and down"), "nod head", _nod),
    )


@dataclass
class SynthSpec:
    """Knobs for :func:`synth_corpus`. ``primitives`` filters by name when given."""

    n_entries: int = 1000
    primitives: tuple = ()
    min_primitives: int = 1
    max_primitives: int = 3
    min_frames: int = 20
    max_frames: int = 40
    max_descriptions: int = 4
    fps: float = 20.0
    ratios: tuple = (0.8, 0.15, 0.05)

    def resolve_primitives(self):
        table = {p.name: p for p in default_primitives()}
        if not self.primitives:
            return tuple(table.values())
        unknown = [name for name in self.primitives if name not in table]
        if unknown:
            raise ValueError(f"unknown primitives: {unknown}")
        return tuple(table[name] for name in self.primitives)


def add_sway(parts, rng):
    """Slow body sway in heading and lateral drift, present in every motion."""
    n = len(parts["turn"])
    u = np.arange(n) / 20.0
    for key, amp in (("turn", 0.012), ("lateral", 0.004)):
        freq = rng.uniform(0.2, 0.5)
        parts[key] = parts[key] + rng.uniform(0.5, 1.0) * amp * np.sin(2 * np.pi * freq * u + rng.uniform(0, 2 * np.pi))
    return parts


def render(skeleton, segments, rest_height=0.95, rng=None):
    """Integrate primitive segments into one feature sequence."""
    parts = {k: np.concatenate([s[k] for s in segments]) for k in segments[0]}
    if rng is not None:
        parts = add_sway(parts, rng)
    n = len(parts["forward"])
    yaw = np.concatenate([[0.0], np.cumsum(parts["turn"])])
    root = np.zeros((n + 1, 3))
    heading = yaw[:-1]
    step = np.stack([
        parts["forward"] * np.sin(heading) + parts["lateral"] * np.cos(heading),
        np.zeros(n),
        parts["forward"] * np.cos(heading) - parts["lateral"] * np.sin(heading),
    ], axis=1)
    root[1:] = np.cumsum(step, axis=0)
    root[:, 1] = rest_height + np.concatenate([parts["lift"], parts["lift"][-1:]])
    flex = np.concatenate([parts["flex"], parts["flex"][-1:]])
    abduct = np.concatenate([parts["abduct"], parts["abduct"][-1:]])
    return pose_features(skeleton, root, yaw, flex, abduct)


def describe(names, primitives, rng):
    table = {p.name: p for p in primitives}
    words = [SUBJECTS[rng.integers(len(SUBJECTS))]]
    for i, name in enumerate(names):
        phrases = table[name].phrases
        if i:
            words.append(CONNECTORS[rng.integers(len(CONNECTORS))])
        words.append(phrases[rng.integers(len(phrases))])
    return " ".join(words)


def synth_corpus(spec=None, rng=None):
    """Generate a synthetic corpus; ``rng`` is a seed or ``numpy.random.Generator``."""
    spec = spec or SynthSpec()
    rng = np.random.default_rng(rng)
    primitives = spec.resolve_primitives()
    if not primitives:
        raise ValueError("empty primitive set")
    skeleton = stick_figure()
    entries = []
    for i in range(spec.n_entries):
        k = int(rng.integers(spec.min_primitives, spec.max_primitives + 1))
        chosen = [primitives[int(rng.integers(len(primitives)))] for _ in range(k)]
        segments = [p.generator(int(rng.integers(spec.min_frames, spec.max_frames + 1)), rng) for p in chosen]
        frames = render(skeleton, segments, rng=rng)
        names = [p.name for p in chosen]
        n_desc = int(rng.integers(1, spec.max_descriptions + 1))
        texts = [describe(names, primitives, rng) for _ in range(n_desc)]
        entries.append(Entry(id=f"synth_{i:05d}", motion=frames, fps=spec.fps, texts=texts, split="train"))
    corpus = Corpus(entries, skeleton.layout())
    assign_splits(corpus, spec.ratios, rng)
    return corpus


def corpus_vocabulary_words(spec=None):
    """All words the generator can emit for the selected primitives."""
    spec = spec or SynthSpec()
    words = set()
    for s in SUBJECTS + CONNECTORS:
        words.update(s.split())
    for p in spec.resolve_primitives():
        for phrase in p.phrases:
            words.update(phrase.split())
    return words
