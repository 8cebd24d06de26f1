import itertools

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from motok.decoding import beam_search, greedy_decode, sample_until_end

BOS, EOS, V = 0, 1, 6


def toy_model(seed):
    """Fixed next-token table keyed on (length, last token)."""
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(8, V, V)) * 2.0
    table[:, :, BOS] = -np.inf

    def step(prefixes):
        rows = []
        for p in prefixes.tolist():
            logits = torch.tensor(table[len(p) - 1, p[-1]])
            rows.append(torch.log_softmax(logits, -1))
        return torch.stack(rows)
    return step


def exhaustive(step, max_len):
    best = (None, -np.inf)
    for n in range(max_len + 1):
        for mid in itertools.product(range(2, V), repeat=n):
            seq = [BOS, *mid]
            score = 0.0
            for i in range(1, len(seq)):
                score += float(step(torch.tensor([seq[:i]]))[0, seq[i]])
            if n < max_len:
                score += float(step(torch.tensor([seq]))[0, EOS])
            if score > best[1]:
                best = (seq + [EOS], score)
    return best


@pytest.mark.parametrize("seed", range(6))
def test_wide_beam_finds_exhaustive_optimum(seed):
    step = toy_model(seed)
    ids, score = beam_search(step, BOS, EOS, beam_size=V ** 3, max_len=3)
    ref_ids, ref_score = exhaustive(step, 3)
    assert score == pytest.approx(ref_score, abs=1e-9)
    assert ids.tolist() == ref_ids


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000), max_len=st.integers(1, 6))
def test_beam_one_equals_greedy(seed, max_len):
    step = toy_model(seed)
    g_ids, g_score = greedy_decode(step, BOS, EOS, max_len)
    b_ids, b_score = beam_search(step, BOS, EOS, beam_size=1, max_len=max_len)
    assert g_ids.tolist() == b_ids.tolist()
    assert g_score == pytest.approx(b_score, abs=1e-9)


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000))
def test_wider_beam_never_scores_lower_than_greedy(seed):
    step = toy_model(seed)
    _, g = greedy_decode(step, BOS, EOS, 4)
    _, b = beam_search(step, BOS, EOS, beam_size=4, max_len=4)
    assert b >= g - 1e-9


def test_beam_size_validated():
    with pytest.raises(ValueError):
        beam_search(toy_model(0), BOS, EOS, beam_size=0)


def test_framing_and_cap():
    step = toy_model(1)
    ids, _ = beam_search(step, BOS, EOS, beam_size=2, max_len=2)
    assert ids[0] == BOS and ids[-1] == EOS and len(ids) <= 4


def test_sampling_stops_only_after_first_token():
    def always_end(prefixes):
        lp = torch.full((len(prefixes), 5), -10.0)
        lp[:, 3] = 0.0
        return lp
    ids, ended = sample_until_end(always_end, 4, 3, 3, 10, np.random.default_rng(0))
    assert ended and len(ids) == 3 and ids[0] == 4 and ids[-1] == 3 and ids[1] < 3


def test_sampling_cap_appends_end():
    def never_end(prefixes):
        return torch.log_softmax(torch.zeros(len(prefixes), 5), -1) + torch.tensor([0, 0, 0, -9.0, -9.0])
    ids, ended = sample_until_end(never_end, 4, 3, 3, 7, np.random.default_rng(0))
    assert not ended and len(ids) == 9 and ids[-1] == 3
    assert all(0 <= i < 3 for i in ids[1:-1])
