import re
from dataclasses import replace

import numpy as np

LATERAL_WORDS = {"left": "right", "right": "left"}
_WORD = re.compile(r"\b(left|right)\b")


def mirror_text(text):
    return _WORD.sub(lambda m: LATERAL_WORDS[m.group(1)], text)


def mirror_motion(motion, layout):
    perm, sign = layout.mirror_permutation()
    return np.asarray(motion)[:, perm] * sign


def mirror_augment(entry, layout):
    """Reflect an entry across the sagittal plane, swapping lateral words."""
    return replace(
        entry,
        id=entry.id,
        motion=mirror_motion(entry.motion, layout),
        texts=[mirror_text(t) for t in entry.texts],
    )


def mirror_token_ids(ids, vocab):
    """Swap the ids of 'left' and 'right' in a text-token sequence."""
    ids = np.array(ids, copy=True)
    left, right = vocab.get("left"), vocab.get("right")
    if left is None or right is None:
        return ids
    is_left, is_right = ids == left, ids == right
    ids[is_left], ids[is_right] = right, left
    return ids


def crop_to_multiple(motion, multiple=4):
    n = (len(motion) // multiple) * multiple
    return motion[:n]


def random_crop(motion, rng=None, head=None, tail=None, max_cut=4, multiple=4):
    """Cut 0..max_cut frames from each end, then trim to a multiple of ``multiple``.

    ``head``/``tail`` fix the cut sizes instead of drawing them.
    """
    motion = np.asarray(motion)
    if len(motion) <= 2 * max_cut:
        raise ValueError(f"random_crop needs more than {2 * max_cut} frames, got {len(motion)}")
    rng = np.random.default_rng(rng)
    if head is None:
        head = int(rng.integers(0, max_cut + 1))
    if tail is None:
        tail = int(rng.integers(0, max_cut + 1))
    out = crop_to_multiple(motion[head:len(motion) - tail], multiple)
    if len(out) < multiple:
        raise ValueError(f"cropped sequence has {len(out)} frames, fewer than {multiple}")
    return out
